//! Named finite-difference suites covering every differentiable piece of
//! the pipeline, from single tape primitives up to the full model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_gradients, GradCheckOptions, GradCheckReport};
use crate::data::synth_city;
use crate::error::{Error, Result};
use crate::features::{init_edge_features, static_cnn, street_raster, StaticCnnParams, Timestamp};
use crate::gn::{EdgeMode, GnBlock, GnDims, VarState};
use crate::graph::{Adjacency, RoadGraph, StreetMap};
use crate::model::{randomize_params, Model, ModelConfig};
use crate::resample::{pool_features, pool_graph, upsample, UpsampleAnchor, UpsamplingGraph};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, Var};

pub const MODULES: [&str; 5] = ["tensor", "features", "gn", "resample", "model"];

/// Tolerance for single components.
pub const COMPONENT_TOLERANCE: f64 = 1e-5;
/// Tolerance for the full model.
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub module: &'static str,
    pub name: String,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error() <= self.tolerance
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("consistent shape")
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> StreetMap {
    let px = (0..h * w).map(|_| if rng.random_bool(0.6) { rng.random_range(1..=255u8) } else { 0 }).collect();
    StreetMap::new(h, w, px).expect("valid raster")
}

/// Contracts `out` with a fixed random tensor so every output element
/// carries a distinct weight in the loss.
fn weighted_sum(tape: &mut Tape, out: Var, rng_seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let c = rand_tensor(&mut ChaCha8Rng::seed_from_u64(rng_seed), &shape);
    let c = tape.constant(c);
    let p = tape.mul(out, c)?;
    Ok(tape.sum(p))
}

struct Case {
    name: String,
    params: ParamSet,
    #[allow(clippy::type_complexity)]
    loss: Box<dyn Fn(&mut Tape, &BoundParams) -> Result<Var>>,
    opts: GradCheckOptions,
    tolerance: f64,
}

impl Case {
    fn new(name: &str, params: ParamSet, loss: impl Fn(&mut Tape, &BoundParams) -> Result<Var> + 'static) -> Self {
        Case {
            name: name.into(),
            params,
            loss: Box::new(loss),
            opts: GradCheckOptions::default(),
            tolerance: COMPONENT_TOLERANCE,
        }
    }
}

fn params_of(rng: &mut ChaCha8Rng, shapes: &[&[usize]]) -> (ParamSet, Vec<crate::tensor::ParamId>) {
    let mut p = ParamSet::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| p.insert(format!("x{i}"), rand_tensor(rng, s)).expect("unique name"))
        .collect();
    (p, ids)
}

fn tensor_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut cases = Vec::new();
    macro_rules! unary_case {
        ($name:expr, [$($s:expr),*], |$tape:ident, $x:ident| $body:expr) => {{
            let (p, ids) = params_of(&mut rng, &[&[$($s),*]]);
            let id = ids[0];
            cases.push(Case::new($name, p, move |$tape: &mut Tape, b: &BoundParams| {
                let $x = b.var(id);
                let y: Var = $body;
                weighted_sum($tape, y, 7)
            }));
        }};
    }
    macro_rules! binary_case {
        ($name:expr, [$($a:expr),*], [$($b:expr),*], |$tape:ident, $x:ident, $y:ident| $body:expr) => {{
            let (p, ids) = params_of(&mut rng, &[&[$($a),*], &[$($b),*]]);
            let (ia, ib) = (ids[0], ids[1]);
            cases.push(Case::new($name, p, move |$tape: &mut Tape, b: &BoundParams| {
                let ($x, $y) = (b.var(ia), b.var(ib));
                let z: Var = $body;
                weighted_sum($tape, z, 8)
            }));
        }};
    }
    binary_case!("matmul", [3, 4], [4, 5], |t, a, b| t.matmul(a, b)?);
    binary_case!("add_bias", [4, 3], [3], |t, a, b| t.add_bias(a, b)?);
    binary_case!("add", [3, 4], [3, 4], |t, a, b| t.add(a, b)?);
    binary_case!("mul", [3, 4], [3, 4], |t, a, b| t.mul(a, b)?);
    binary_case!("concat", [3, 2], [3, 4], |t, a, b| t.concat(&[a, b, a])?);
    unary_case!("scale", [2, 5], |t, x| t.scale(x, -1.7));
    unary_case!("relu", [4, 5], |t, x| t.relu(x));
    unary_case!("slice_rows", [5, 3], |t, x| t.slice_rows(x, 1, 4)?);
    unary_case!("gather_rows", [4, 3], |t, x| t.gather_rows(x, &[2, 0, 2, 3])?);
    unary_case!("segment_sum", [5, 3], |t, x| t.segment_sum(x, &[1, 0, 1, 3, 1], 4)?);
    unary_case!("scatter_rows", [3, 2], |t, x| t.scatter_rows(x, &[4, 0, 2], 5)?);
    unary_case!("segment_max", [6, 3], |t, x| t.segment_max(x, &[0, 2, 0, 0, 2, 1], 4)?);
    unary_case!("sum_rows", [4, 3], |t, x| t.sum_rows(x)?);
    unary_case!("reshape", [4, 3], |t, x| t.reshape(x, &[2, 6])?);
    {
        let (p, ids) = params_of(&mut rng, &[&[3, 4]]);
        let id = ids[0];
        cases.push(Case::new("sum", p, move |t, b| {
            let sq = t.mul(b.var(id), b.var(id))?;
            Ok(t.sum(sq))
        }));
    }
    {
        let (p, ids) = params_of(&mut rng, &[&[3, 4]]);
        let id = ids[0];
        cases.push(Case::new("mean", p, move |t, b| {
            let sq = t.mul(b.var(id), b.var(id))?;
            Ok(t.mean(sq)?)
        }));
    }
    binary_case!("squared_error", [3, 4], [3, 4], |t, a, b| t.squared_error(a, b)?);
    {
        let (p, ids) = params_of(&mut rng, &[&[4, 5, 2], &[3, 3, 2, 3], &[3]]);
        let (x, k, bias) = (ids[0], ids[1], ids[2]);
        cases.push(Case::new("conv2d", p, move |t, b| {
            let y = t.conv2d(b.var(x), b.var(k), b.var(bias))?;
            weighted_sum(t, y, 9)
        }));
    }
    cases
}

fn features_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let map = random_map(&mut rng, 5, 6);
    let graph = RoadGraph::from_street_map(&map, Adjacency::Eight).expect("graph");
    let init = StaticCnnParams::init(&mut rng);
    let mut p = ParamSet::new();
    let w1 = p.insert("conv1.W", init.conv1_w).expect("name");
    let b1 = p.insert("conv1.b", Tensor::full([8], 0.05)).expect("name");
    let w2 = p.insert("conv2.W", init.conv2_w).expect("name");
    let b2 = p.insert("conv2.b", Tensor::full([8], 0.05)).expect("name");
    let raster = street_raster(&map);
    vec![Case::new("static_cnn+edge_features", p, move |t, b| {
        let x = t.constant(raster.clone());
        let vt = static_cnn(t, x, b.var(w1), b.var(b1), b.var(w2), b.var(b2))?;
        let e = init_edge_features(t, vt, &graph)?;
        let cnn = weighted_sum(t, vt, 10)?;
        let edges = weighted_sum(t, e, 11)?;
        Ok(t.add(cnn, edges)?)
    })]
}

fn gn_case(name: &str, mode: EdgeMode, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = random_map(&mut rng, 5, 5);
    let graph = RoadGraph::from_street_map(&map, Adjacency::Eight).expect("graph");
    let dims = GnDims {
        node_in: 3,
        edge_in: 2,
        global_in: 2,
        node_out: 3,
        edge_out: 2,
        global_out: 2,
    };
    let mut p = ParamSet::new();
    let block = GnBlock::register(&mut p, "gn", dims, mode, &mut rng).expect("register");
    randomize_params(&mut p, 0.5, &mut rng);
    let v = p.insert("v", rand_tensor(&mut rng, &[graph.node_count(), 3])).expect("name");
    let e = p.insert("e", rand_tensor(&mut rng, &[graph.edge_count(), 2])).expect("name");
    let u = p.insert("u", rand_tensor(&mut rng, &[1, 2])).expect("name");
    Case::new(name, p, move |t, b| {
        let out = block.forward(
            t,
            b,
            &graph,
            VarState {
                v: b.var(v),
                e: b.var(e),
                u: b.var(u),
            },
        )?;
        let a = weighted_sum(t, out.v, 12)?;
        let c = weighted_sum(t, out.e, 13)?;
        let d = weighted_sum(t, out.u, 14)?;
        let ac = t.add(a, c)?;
        Ok(t.add(ac, d)?)
    })
}

fn gn_cases() -> Vec<Case> {
    vec![
        gn_case("gn_block.directional", EdgeMode::Directional, 303),
        gn_case("gn_block.shared", EdgeMode::Shared, 304),
    ]
}

fn resample_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let map = random_map(&mut rng, 6, 7);
    let fine = RoadGraph::from_street_map(&map, Adjacency::Eight).expect("graph");
    let pooled = pool_graph(&fine).expect("pool");
    let mut cases = Vec::new();
    {
        let mut p = ParamSet::new();
        let v = p.insert("v", rand_tensor(&mut rng, &[fine.node_count(), 3])).expect("name");
        let e = p.insert("e", rand_tensor(&mut rng, &[fine.edge_count(), 2])).expect("name");
        let pooled = pooled.clone();
        cases.push(Case::new("pool", p, move |t, b| {
            let (pv, pe) = pool_features(t, &pooled, b.var(v), b.var(e))?;
            let a = weighted_sum(t, pv, 15)?;
            let c = weighted_sum(t, pe, 16)?;
            Ok(t.add(a, c)?)
        }));
    }
    for anchor in [UpsampleAnchor::Center, UpsampleAnchor::Corner] {
        let up = UpsamplingGraph::build(&pooled.graph, &fine, anchor).expect("upsampling graph");
        let dims = GnDims {
            node_in: 3,
            edge_in: 2,
            global_in: 2,
            node_out: 3,
            edge_out: 2,
            global_out: 2,
        };
        let mut p = ParamSet::new();
        let block = GnBlock::register(&mut p, "up", dims, anchor.edge_mode(), &mut rng).expect("register");
        randomize_params(&mut p, 0.5, &mut rng);
        let v = p.insert("v", rand_tensor(&mut rng, &[up.n_input(), 3])).expect("name");
        let u = p.insert("u", rand_tensor(&mut rng, &[1, 2])).expect("name");
        cases.push(Case::new(&format!("upsample.{anchor}"), p, move |t, b| {
            let (vt, ut) = upsample(t, b, &block, &up, b.var(v), b.var(u))?;
            let a = weighted_sum(t, vt, 17)?;
            let c = weighted_sum(t, ut, 18)?;
            Ok(t.add(a, c)?)
        }));
    }
    cases
}

fn model_cases() -> Result<Vec<Case>> {
    let ds = synth_city(3, 6, 6, 1)?;
    let config = ModelConfig {
        depth: 2,
        node_width: 4,
        edge_width: 3,
        global_width: 3,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, 11)?;
    randomize_params(model.params_mut(), 0.5, &mut ChaCha8Rng::seed_from_u64(12));
    let city = model.city_graphs(&ds.street_map)?;
    let v0 = model.node_inputs(&city, &ds.days[0].movie, 90)?;
    let n = city.graph().node_count();
    let target = Tensor::new(vec![n, 48], (0..n * 48).map(|i| (i % 7) as f64 / 10.0).collect())?;
    let ts = Timestamp::new(8 * 60, 2)?;
    let params = model.params().clone();
    let mut case = Case::new("model.depth2.6x6", params, move |t, b| {
        let out = model.forward(t, b, &city, &v0, ts)?;
        let tg = t.constant(target.clone());
        Ok(t.squared_error(out, tg)?)
    });
    case.opts.max_per_tensor = Some(12);
    case.tolerance = END_TO_END_TOLERANCE;
    Ok(vec![case])
}

/// Runs the suite for one module name from [`MODULES`].
pub fn run_suite(module: &str) -> Result<Vec<SuiteCase>> {
    let (module, cases) = match module {
        "tensor" => ("tensor", tensor_cases()),
        "features" => ("features", features_cases()),
        "gn" => ("gn", gn_cases()),
        "resample" => ("resample", resample_cases()),
        "model" => ("model", model_cases()?),
        other => {
            return Err(Error::Config(format!(
                "unknown gradcheck module `{other}`; expected one of {}",
                MODULES.join(", ")
            )))
        }
    };
    cases
        .into_iter()
        .map(|c| {
            let report = check_gradients(&c.params, |t, b| (c.loss)(t, b), &c.opts)?;
            Ok(SuiteCase {
                module,
                name: c.name,
                tolerance: c.tolerance,
                report,
            })
        })
        .collect()
}
