//! Graph U-Net: static-map CNN, input projections, one GN block per encoder
//! level, a bottom block, and per decoder level an upsampling block followed
//! by two GN blocks over the skip-concatenated features.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint;
use crate::config::KvConfig;
use crate::data::{mirror_channel, TrafficMovie, CHANNELS, HORIZON_OFFSETS};
use crate::error::{Error, Result};
use crate::features::{
    init_edge_features, init_global, init_node_features, reflect_kernel, static_cnn, street_raster, Timestamp,
    STATIC_CHANNELS,
};
use crate::gn::{EdgeMode, GnBlock, GnDims, VarState};
use crate::graph::{Adjacency, RoadGraph, StreetMap};
use crate::resample::{pool_features, pool_graph, upsample, PoolResult, UpsampleAnchor, UpsamplingGraph};
use crate::tensor::{BoundParams, ParamId, ParamSet, Tape, Tensor, Var};

/// Predicted frames per seed window.
pub const OUT_FRAMES: usize = HORIZON_OFFSETS.len();

/// Per-node output width: six frames of eight channels.
pub const OUTPUT_DIM: usize = OUT_FRAMES * CHANNELS;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of pooling levels.
    pub depth: usize,
    pub node_width: usize,
    pub edge_width: usize,
    pub global_width: usize,
    pub in_frames: usize,
    pub directional: bool,
    pub clamp_output: bool,
    pub upsample_anchor: UpsampleAnchor,
    pub adjacency: Adjacency,
    /// Diagnostic: feed zeros wherever a block would read the global state.
    pub disable_global: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 3,
            node_width: 32,
            edge_width: 32,
            global_width: 32,
            in_frames: 12,
            directional: true,
            clamp_output: false,
            upsample_anchor: UpsampleAnchor::Center,
            adjacency: Adjacency::Eight,
            disable_global: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.node_width == 0 || self.edge_width == 0 || self.global_width == 0 {
            return bad("hidden widths must be positive".into());
        }
        if self.in_frames == 0 {
            return bad("in_frames must be positive".into());
        }
        if !self.directional && self.upsample_anchor == UpsampleAnchor::Corner {
            return bad("corner-anchored upsampling needs directional blocks".into());
        }
        Ok(())
    }

    /// Reads the model keys; other keys are left for the caller.
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let d = ModelConfig::default();
        let c = ModelConfig {
            depth: kv.get("depth", d.depth)?,
            node_width: kv.get("node_width", d.node_width)?,
            edge_width: kv.get("edge_width", d.edge_width)?,
            global_width: kv.get("global_width", d.global_width)?,
            in_frames: kv.get("in_frames", d.in_frames)?,
            directional: kv.get("directional", d.directional)?,
            clamp_output: kv.get("clamp_output", d.clamp_output)?,
            upsample_anchor: kv.get("upsample_anchor", d.upsample_anchor)?,
            adjacency: kv.get("adjacency", d.adjacency)?,
            disable_global: kv.get("disable_global", d.disable_global)?,
        };
        let out_frames: usize = kv.get("out_frames", OUT_FRAMES)?;
        let channels: usize = kv.get("channels", CHANNELS)?;
        if out_frames != OUT_FRAMES || channels != CHANNELS {
            return Err(Error::Config(format!(
                "output must be {OUT_FRAMES} frames of {CHANNELS} channels, got {out_frames} x {channels}"
            )));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "depth = {}\nnode_width = {}\nedge_width = {}\nglobal_width = {}\nin_frames = {}\nout_frames = {OUT_FRAMES}\n\
             channels = {CHANNELS}\ndirectional = {}\nclamp_output = {}\nupsample_anchor = {}\nadjacency = {}\ndisable_global = {}\n",
            self.depth,
            self.node_width,
            self.edge_width,
            self.global_width,
            self.in_frames,
            self.directional,
            self.clamp_output,
            self.upsample_anchor,
            self.adjacency,
            self.disable_global
        )
    }

    fn node_input(&self) -> usize {
        self.in_frames * CHANNELS
    }

    fn global_input(&self) -> usize {
        self.node_input() + 9
    }

    fn edge_mode(&self) -> EdgeMode {
        if self.directional {
            EdgeMode::Directional
        } else {
            EdgeMode::Shared
        }
    }
}

/// The graph hierarchy of one street map, shared by every window of a city.
#[derive(Debug, Clone)]
pub struct CityGraphs {
    raster: Tensor,
    /// Level 0 is the full-resolution road graph.
    levels: Vec<RoadGraph>,
    pools: Vec<PoolResult>,
    /// `ups[l]` lifts level `l + 1` to level `l`.
    ups: Vec<UpsamplingGraph>,
}

impl CityGraphs {
    pub fn build(map: &StreetMap, config: &ModelConfig) -> Result<Self> {
        let need = 1usize << config.depth;
        if map.height.max(map.width) < need {
            return Err(Error::Invalid(format!(
                "{}x{} raster is too small to pool {} times (needs a side of at least {need})",
                map.height, map.width, config.depth
            )));
        }
        let mut levels = vec![RoadGraph::from_street_map(map, config.adjacency)?];
        let mut pools = Vec::with_capacity(config.depth);
        let mut ups = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let pooled = pool_graph(&levels[l])?;
            ups.push(UpsamplingGraph::build(&pooled.graph, &levels[l], config.upsample_anchor)?);
            levels.push(pooled.graph.clone());
            pools.push(pooled);
        }
        Ok(CityGraphs {
            raster: street_raster(map),
            levels,
            pools,
            ups,
        })
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.levels[0]
    }

    pub fn level(&self, l: usize) -> &RoadGraph {
        &self.levels[l]
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn register(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, std: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let data = if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect()
        } else {
            vec![0.0; fan_in * fan_out]
        };
        Ok(Linear {
            w: params.insert(format!("{name}.W"), Tensor::new(vec![fan_in, fan_out], data)?)?,
            b: params.insert(format!("{name}.b"), Tensor::zeros([fan_out]))?,
        })
    }

    fn apply(self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.w))?;
        Ok(tape.add_bias(y, bound.var(self.b))?)
    }
}

#[derive(Debug, Clone)]
struct Layout {
    cnn: [ParamId; 4],
    input_node: Linear,
    input_edge: Linear,
    input_global: Linear,
    encoders: Vec<GnBlock>,
    bottom: GnBlock,
    /// Indexed by level, not by forward order.
    upsamplers: Vec<GnBlock>,
    decoders: Vec<[GnBlock; 2]>,
    head: Linear,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

impl Model {
    /// Fresh parameters. The output head starts at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let c = &config;
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();

        let conv = |params: &mut ParamSet, name: &str, shape: [usize; 4], rng: &mut ChaCha8Rng| -> Result<(ParamId, ParamId)> {
            let dist = Normal::new(0.0, he(shape[0] * shape[1] * shape[2])).expect("positive std");
            let data = (0..shape.iter().product()).map(|_| dist.sample(rng)).collect();
            let w = params.insert(format!("{name}.W"), Tensor::new(shape.to_vec(), data)?)?;
            let b = params.insert(format!("{name}.b"), Tensor::zeros([shape[3]]))?;
            Ok((w, b))
        };
        let (w1, b1) = conv(&mut params, "cnn.conv1", [3, 3, 1, STATIC_CHANNELS], &mut rng)?;
        let (w2, b2) = conv(&mut params, "cnn.conv2", [3, 3, STATIC_CHANNELS, STATIC_CHANNELS], &mut rng)?;

        let (hv, he_, hu) = (c.node_width, c.edge_width, c.global_width);
        let input_node = Linear::register(&mut params, "input.node", c.node_input(), hv, he(c.node_input()), &mut rng)?;
        let input_edge = Linear::register(&mut params, "input.edge", 2 * STATIC_CHANNELS, he_, he(2 * STATIC_CHANNELS), &mut rng)?;
        let input_global = Linear::register(&mut params, "input.global", c.global_input(), hu, he(c.global_input()), &mut rng)?;

        let mode = c.edge_mode();
        let square = GnDims::square(hv, he_, hu);
        let mut next = 0;
        let mut block = |params: &mut ParamSet, dims: GnDims, mode: EdgeMode, rng: &mut ChaCha8Rng| {
            let b = GnBlock::register(params, &format!("block{next}"), dims, mode, rng);
            next += 1;
            b
        };
        let encoders = (0..c.depth).map(|_| block(&mut params, square, mode, &mut rng)).collect::<Result<Vec<_>>>()?;
        let bottom = block(&mut params, square, mode, &mut rng)?;
        let up_mode = if c.directional { c.upsample_anchor.edge_mode() } else { EdgeMode::Shared };
        let skip_dims = GnDims {
            node_in: 2 * hv,
            ..square
        };
        let mut upsamplers = Vec::with_capacity(c.depth);
        let mut decoders = Vec::with_capacity(c.depth);
        for _ in 0..c.depth {
            upsamplers.push(block(&mut params, square, up_mode, &mut rng)?);
            let first = block(&mut params, skip_dims, mode, &mut rng)?;
            let second = block(&mut params, square, mode, &mut rng)?;
            decoders.push([first, second]);
        }
        // Built deepest level first; store by level.
        upsamplers.reverse();
        decoders.reverse();
        let head = Linear::register(&mut params, "head", hv, OUTPUT_DIM, 0.0, &mut rng)?;

        Ok(Model {
            config,
            params,
            layout: Layout {
                cnn: [w1, b1, w2, b2],
                input_node,
                input_edge,
                input_global,
                encoders,
                bottom,
                upsamplers,
                decoders,
                head,
            },
        })
    }

    /// Architecture from `config`, parameters from a checkpoint file.
    pub fn load(config: ModelConfig, path: &Path) -> Result<Self> {
        let mut m = Model::new(config, 0)?;
        checkpoint::load(&mut m.params, path)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn city_graphs(&self, map: &StreetMap) -> Result<CityGraphs> {
        CityGraphs::build(map, &self.config)
    }

    /// Initial node features of a seed window.
    pub fn node_inputs(&self, city: &CityGraphs, movie: &TrafficMovie, start: usize) -> Result<Tensor> {
        Ok(init_node_features(movie, start, self.config.in_frames, city.graph())?)
    }

    /// `[N, 48]` predictions on the normalized scale, recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, city: &CityGraphs, v0: &Tensor, ts: Timestamp) -> Result<Var> {
        let c = &self.config;
        let l = &self.layout;
        if city.levels.len() != c.depth + 1 {
            return Err(Error::Invalid(format!(
                "graph hierarchy has {} pooling levels, model has {}",
                city.levels.len() - 1,
                c.depth
            )));
        }
        let zero_u = if c.disable_global {
            Some(tape.constant(Tensor::zeros([1, c.global_width])))
        } else {
            None
        };
        let gu = |u: Var| zero_u.unwrap_or(u);

        let raster = tape.constant(city.raster.clone());
        let [w1, b1, w2, b2] = l.cnn.map(|id| bound.var(id));
        let vtilde = static_cnn(tape, raster, w1, b1, w2, b2)?;
        let e0 = init_edge_features(tape, vtilde, city.graph())?;
        let u0 = if c.disable_global {
            Tensor::zeros([1, c.global_input()])
        } else {
            init_global(v0, ts)
        };
        let v0 = tape.constant(v0.clone());
        let u0 = tape.constant(u0);

        let mut v = l.input_node.apply(tape, bound, v0)?;
        let mut e = l.input_edge.apply(tape, bound, e0)?;
        let mut u = l.input_global.apply(tape, bound, u0)?;

        let mut skips = Vec::with_capacity(c.depth);
        for (lvl, block) in l.encoders.iter().enumerate() {
            let s = block.forward(tape, bound, &city.levels[lvl], VarState { v, e, u: gu(u) })?;
            skips.push((s.v, s.e));
            (v, e) = pool_features(tape, &city.pools[lvl], s.v, s.e)?;
            u = s.u;
        }
        let s = l.bottom.forward(tape, bound, &city.levels[c.depth], VarState { v, e, u: gu(u) })?;
        (v, u) = (s.v, s.u);
        for lvl in (0..c.depth).rev() {
            let (vt, u_up) = upsample(tape, bound, &l.upsamplers[lvl], &city.ups[lvl], v, gu(u))?;
            let (skip_v, skip_e) = skips[lvl];
            let joined = tape.concat(&[vt, skip_v])?;
            let graph = &city.levels[lvl];
            let [first, second] = &l.decoders[lvl];
            let s = first.forward(tape, bound, graph, VarState { v: joined, e: skip_e, u: gu(u_up) })?;
            let s = second.forward(tape, bound, graph, VarState { v: s.v, e: s.e, u: gu(s.u) })?;
            (v, u) = (s.v, s.u);
        }
        l.head.apply(tape, bound, v)
    }

    /// Node predictions for one seed window, clamped to `[0, 1]` when configured.
    pub fn predict_nodes(&self, city: &CityGraphs, movie: &TrafficMovie, start: usize, ts: Timestamp) -> Result<Tensor> {
        let v0 = self.node_inputs(city, movie, start)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, city, &v0, ts)?;
        let mut pred = tape.value(out).clone();
        if self.config.clamp_output {
            pred.data_mut().iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
        }
        Ok(pred)
    }

    /// Full `[6, H, W, 8]` frames for one seed window.
    pub fn predict_frames(&self, city: &CityGraphs, movie: &TrafficMovie, start: usize, ts: Timestamp) -> Result<Vec<f64>> {
        let g = city.graph();
        render_to_raster(&self.predict_nodes(city, movie, start, ts)?, g, g.height(), g.width())
    }

    /// Parameters of the same network acting on point-reflected cities:
    /// reflected CNN kernels, quadrant transforms swapped by the reflection,
    /// and heading channels swapped in the input projections and the head.
    pub fn mirrored(&self) -> Model {
        let mut m = self.clone();
        let p = &mut m.params;
        let l = &self.layout;
        for id in [l.cnn[0], l.cnn[2]] {
            *p.tensor_mut(id) = reflect_kernel(p.tensor(id));
        }
        let frames = self.config.in_frames;
        let channel_perm = |blocks: usize| -> Vec<usize> {
            (0..blocks * CHANNELS).map(|i| (i / CHANNELS) * CHANNELS + mirror_channel(i % CHANNELS)).collect()
        };
        permute_rows(p.tensor_mut(l.input_node.w), &channel_perm(frames));
        permute_rows(p.tensor_mut(l.input_global.w), &channel_perm(frames));
        for block in l.encoders.iter().chain([&l.bottom]).chain(&l.upsamplers).chain(l.decoders.iter().flatten()) {
            block.mirror_params(p);
        }
        let head_perm = channel_perm(OUT_FRAMES);
        permute_cols(p.tensor_mut(l.head.w), &head_perm);
        permute_cols(p.tensor_mut(l.head.b), &head_perm);
        m
    }
}

/// New row `i` is old row `perm[i]`; rows past `perm.len()` stay.
fn permute_rows(t: &mut Tensor, perm: &[usize]) {
    let cols = t.shape()[1];
    let old = t.data().to_vec();
    for (i, &p) in perm.iter().enumerate() {
        t.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(&old[p * cols..(p + 1) * cols]);
    }
}

/// New column `j` is old column `perm[j]`; works on matrices and vectors.
fn permute_cols(t: &mut Tensor, perm: &[usize]) {
    let cols = *t.shape().last().expect("non-scalar");
    let old = t.data().to_vec();
    for (r, row) in t.data_mut().chunks_mut(cols).enumerate() {
        for (j, &p) in perm.iter().enumerate() {
            row[j] = old[r * cols + p];
        }
    }
}

/// `[6, H, W, 8]` frames: each street pixel gets its node's prediction,
/// every other pixel is zero.
pub fn render_to_raster(preds: &Tensor, graph: &RoadGraph, height: usize, width: usize) -> Result<Vec<f64>> {
    if preds.shape() != [graph.node_count(), OUTPUT_DIM] {
        return Err(Error::Invalid(format!(
            "expected predictions [{}, {OUTPUT_DIM}], got {:?}",
            graph.node_count(),
            preds.shape()
        )));
    }
    if graph.height() != height || graph.width() != width {
        return Err(Error::Invalid(format!(
            "graph is {}x{}, raster {height}x{width}",
            graph.height(),
            graph.width()
        )));
    }
    let mut out = vec![0.0; OUT_FRAMES * height * width * CHANNELS];
    for (i, &(r, c)) in graph.positions().iter().enumerate() {
        let row = preds.row(i);
        for h in 0..OUT_FRAMES {
            let o = ((h * height + r) * width + c) * CHANNELS;
            out[o..o + CHANNELS].copy_from_slice(&row[h * CHANNELS..(h + 1) * CHANNELS]);
        }
    }
    Ok(out)
}

/// Randomizes every parameter, including biases and the zero-initialised
/// head; used by tests and gradient checks that need a non-degenerate network.
pub fn randomize_params<R: Rng + ?Sized>(params: &mut ParamSet, scale: f64, rng: &mut R) {
    for t in params.tensors_mut() {
        let fan_in = if t.rank() >= 2 { t.shape()[..t.rank() - 1].iter().product::<usize>() } else { 4 };
        let std = scale * (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        t.data_mut().iter_mut().for_each(|x| *x = dist.sample(rng));
    }
}
