//! 2x2 graph pooling and graph upsampling.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::gn::{EdgeMode, GnBlock, MessageGraph, VarState};
use crate::graph::{classify_edge, partition, GraphError, Quadrant, RoadGraph};
use crate::tensor::{BoundParams, Tape, Tensor, Var};

/// Coarse graph plus the fine-to-coarse maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    pub graph: RoadGraph,
    /// Coarse node of every fine node.
    pub node_assignment: Vec<usize>,
    /// Coarse edge of every fine edge; `None` for edges inside one window.
    pub edge_assignment: Vec<Option<usize>>,
}

/// Merges every 2x2 window into one node. Extents round up, so boundary
/// windows of odd rasters hold fewer pixels.
pub fn pool_graph(graph: &RoadGraph) -> Result<PoolResult, GraphError> {
    if graph.node_count() == 0 {
        return Err(GraphError::Empty);
    }
    let (h, w) = (graph.height().div_ceil(2), graph.width().div_ceil(2));
    let windows: BTreeSet<(usize, usize)> = graph.positions().iter().map(|&(r, c)| (r / 2, c / 2)).collect();
    let positions: Vec<(usize, usize)> = windows.into_iter().collect();
    let mut lookup = vec![usize::MAX; h * w];
    for (i, &(r, c)) in positions.iter().enumerate() {
        lookup[r * w + c] = i;
    }
    let node_assignment: Vec<usize> = graph.positions().iter().map(|&(r, c)| lookup[(r / 2) * w + c / 2]).collect();
    let pairs: BTreeSet<(usize, usize)> = graph
        .edges()
        .map(|(s, r)| (node_assignment[s], node_assignment[r]))
        .filter(|(s, r)| s != r)
        .collect();
    let edges: Vec<(usize, usize)> = pairs.into_iter().collect();
    let edge_assignment = graph
        .edges()
        .map(|(s, r)| {
            let key = (node_assignment[s], node_assignment[r]);
            (key.0 != key.1).then(|| edges.binary_search(&key).expect("pair collected above"))
        })
        .collect();
    Ok(PoolResult {
        graph: RoadGraph::from_parts(h, w, positions, edges)?,
        node_assignment,
        edge_assignment,
    })
}

/// Feature-wise maxima over each window's nodes and each coarse edge's fine
/// edges. Ties route the gradient to the lowest fine index.
pub fn pool_features(tape: &mut Tape, pooled: &PoolResult, v: Var, e: Var) -> Result<(Var, Var)> {
    let vp = tape.segment_max(v, &pooled.node_assignment, pooled.graph.node_count())?;
    let (kept, targets): (Vec<usize>, Vec<usize>) = pooled
        .edge_assignment
        .iter()
        .enumerate()
        .filter_map(|(k, a)| a.map(|c| (k, c)))
        .unzip();
    let ek = tape.gather_rows(e, &kept)?;
    let ep = tape.segment_max(ek, &targets, pooled.graph.edge_count())?;
    Ok((vp, ep))
}

/// Plain-tensor pooling.
pub fn pool(graph: &RoadGraph, v: &Tensor, e: &Tensor) -> Result<(PoolResult, Tensor, Tensor)> {
    let pooled = pool_graph(graph)?;
    let mut tape = Tape::new();
    let (vv, ev) = (tape.constant(v.clone()), tape.constant(e.clone()));
    let (vp, ep) = pool_features(&mut tape, &pooled, vv, ev)?;
    let (vp, ep) = (tape.value(vp).clone(), tape.value(ep).clone());
    Ok((pooled, vp, ep))
}

/// How an upsampling edge is labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpsampleAnchor {
    /// Coarse node sits at the centre of its 2x2 window; each of the four
    /// targets lies in a different quadrant and no edge is zero-length.
    #[default]
    Center,
    /// Coarse node sits on the window's top-left pixel. The coincident
    /// target gets a SELF edge; E and S neighbours fall into NE and SE.
    Corner,
}

impl UpsampleAnchor {
    pub fn edge_mode(self) -> EdgeMode {
        match self {
            UpsampleAnchor::Center => EdgeMode::Directional,
            UpsampleAnchor::Corner => EdgeMode::DirectionalWithSelf,
        }
    }

    fn label(self, dr: usize, dc: usize) -> Quadrant {
        match self {
            UpsampleAnchor::Center => classify_edge(2 * dr as i64 - 1, 2 * dc as i64 - 1),
            UpsampleAnchor::Corner => classify_edge(dr as i64, dc as i64),
        }
    }
}

impl std::str::FromStr for UpsampleAnchor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "center" => Ok(UpsampleAnchor::Center),
            "corner" => Ok(UpsampleAnchor::Corner),
            _ => Err(format!("unknown upsampling anchor `{s}` (expected center or corner)")),
        }
    }
}

impl std::fmt::Display for UpsampleAnchor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpsampleAnchor::Center => "center",
            UpsampleAnchor::Corner => "corner",
        })
    }
}

/// Bipartite graph from coarse nodes (ids `0..n_input`) to fine nodes
/// (ids `n_input..n_input + n_target`).
#[derive(Debug, Clone, PartialEq)]
pub struct UpsamplingGraph {
    anchor: UpsampleAnchor,
    /// Coarse positions scaled by two, then fine positions.
    positions: Vec<(usize, usize)>,
    n_input: usize,
    n_target: usize,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    quadrants: Vec<Quadrant>,
    by_quadrant: [Vec<usize>; 5],
}

impl UpsamplingGraph {
    pub fn build(input: &RoadGraph, target: &RoadGraph, anchor: UpsampleAnchor) -> Result<Self, GraphError> {
        if input.height() != target.height().div_ceil(2) || input.width() != target.width().div_ceil(2) {
            return Err(GraphError::Extent(format!(
                "coarse graph is {}x{}, fine graph {}x{} needs {}x{}",
                input.height(),
                input.width(),
                target.height(),
                target.width(),
                target.height().div_ceil(2),
                target.width().div_ceil(2)
            )));
        }
        let n_input = input.node_count();
        let mut positions: Vec<(usize, usize)> = input.positions().iter().map(|&(r, c)| (2 * r, 2 * c)).collect();
        positions.extend_from_slice(target.positions());
        let (mut senders, mut receivers, mut quadrants) = (Vec::new(), Vec::new(), Vec::new());
        for (t, &(r, c)) in target.positions().iter().enumerate() {
            if let Some(s) = input.node_at(r / 2, c / 2) {
                senders.push(s);
                receivers.push(n_input + t);
                quadrants.push(anchor.label(r % 2, c % 2));
            }
        }
        let by_quadrant = partition(&quadrants);
        Ok(UpsamplingGraph {
            anchor,
            positions,
            n_input,
            n_target: target.node_count(),
            senders,
            receivers,
            quadrants,
            by_quadrant,
        })
    }

    pub fn anchor(&self) -> UpsampleAnchor {
        self.anchor
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn quadrants(&self) -> &[Quadrant] {
        &self.quadrants
    }
}

impl MessageGraph for UpsamplingGraph {
    fn node_count(&self) -> usize {
        self.n_input + self.n_target
    }
    fn edge_count(&self) -> usize {
        self.senders.len()
    }
    fn senders(&self) -> &[usize] {
        &self.senders
    }
    fn receivers(&self) -> &[usize] {
        &self.receivers
    }
    fn quadrant_edges(&self, q: Quadrant) -> &[usize] {
        &self.by_quadrant[q.index()]
    }
}

/// One block pass over the upsampling graph with zero target features and
/// zero edge features. Returns the target node features and the new global.
pub fn upsample(tape: &mut Tape, bound: &BoundParams, block: &GnBlock, up: &UpsamplingGraph, v_in: Var, u: Var) -> Result<(Var, Var)> {
    if up.anchor == UpsampleAnchor::Corner && block.mode() != EdgeMode::DirectionalWithSelf {
        return Err(Error::dimension(
            format!("{}.edge.SELF", block.name()),
            "corner-anchored upsampling needs a SELF transform",
        ));
    }
    let n = up.node_count();
    let rows: Vec<usize> = (0..up.n_input).collect();
    let v = tape.scatter_rows(v_in, &rows, n)?;
    let e = tape.constant(Tensor::zeros([up.edge_count(), block.dims().edge_in]));
    let out = block.forward(tape, bound, up, VarState { v, e, u })?;
    let vt = tape.slice_rows(out.v, up.n_input, n)?;
    Ok((vt, out.u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gn::GnDims;
    use crate::gradcheck::{check_gradients, GradCheckOptions};
    use crate::graph::{Adjacency, StreetMap};
    use crate::tensor::ParamSet;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> StreetMap {
        let mut px: Vec<u8> = (0..h * w).map(|_| if rng.random_bool(density) { 200 } else { 0 }).collect();
        px[rng.random_range(0..h * w)] = 255;
        StreetMap::new(h, w, px).unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn window_max_and_internal_edges_vanish() {
        let map = StreetMap::new(2, 2, vec![1; 4]).unwrap();
        let g = RoadGraph::from_street_map(&map, Adjacency::Eight).unwrap();
        let v = Tensor::from_rows(&[vec![1.0], vec![3.0], vec![2.0], vec![0.0]]).unwrap();
        let e = Tensor::zeros([g.edge_count(), 2]);
        let (p, vp, ep) = pool(&g, &v, &e).unwrap();
        assert_eq!(p.graph.node_count(), 1);
        assert_eq!(p.graph.edge_count(), 0);
        assert_eq!(vp.data(), &[3.0]);
        assert_eq!(ep.shape(), &[0, 2]);
    }

    #[test]
    fn two_pixel_street_pools_to_one_node() {
        let g = RoadGraph::from_street_map(&StreetMap::new(1, 2, vec![9, 9]).unwrap(), Adjacency::Eight).unwrap();
        let p = pool_graph(&g).unwrap();
        assert_eq!((p.graph.node_count(), p.graph.edge_count()), (1, 0));
        assert_eq!((p.graph.height(), p.graph.width()), (1, 1));
    }

    #[test]
    fn max_gradient_goes_to_first_maximum() {
        let map = StreetMap::new(1, 2, vec![1, 1]).unwrap();
        let g = RoadGraph::from_street_map(&map, Adjacency::Eight).unwrap();
        let p = pool_graph(&g).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(Tensor::from_rows(&[vec![2.0], vec![2.0]]).unwrap());
        let e = tape.constant(Tensor::zeros([2, 1]));
        let (vp, _) = pool_features(&mut tape, &p, v, e).unwrap();
        let s = tape.sum(vp);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(v).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn corner_anchor_labels() {
        let coarse = RoadGraph::from_parts(1, 1, vec![(0, 0)], vec![]).unwrap();
        let fine = RoadGraph::from_street_map(&StreetMap::new(2, 2, vec![1; 4]).unwrap(), Adjacency::Eight).unwrap();
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Corner).unwrap();
        use Quadrant::*;
        assert_eq!(up.quadrants(), &[Coincident, NorthEast, SouthEast, SouthEast]);
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Center).unwrap();
        assert_eq!(up.quadrants(), &[NorthWest, NorthEast, SouthWest, SouthEast]);
        assert!(up.senders().iter().all(|&s| s < up.n_input()));
        assert!(up.receivers().iter().all(|&r| r >= up.n_input()));
    }

    #[test]
    fn window_without_coarse_node_gets_no_edges() {
        let coarse = RoadGraph::from_parts(1, 2, vec![(0, 0)], vec![]).unwrap();
        let fine = RoadGraph::from_parts(2, 4, vec![(0, 0), (0, 3)], vec![]).unwrap();
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Center).unwrap();
        assert_eq!(up.receivers(), &[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamSet::new();
        let block = GnBlock::register(&mut params, "up", GnDims::square(2, 2, 2), EdgeMode::Directional, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let v = tape.constant(random_tensor(&mut rng, 1, 2));
        let u = tape.constant(Tensor::zeros([1, 2]));
        let (vt, _) = upsample(&mut tape, &bound, &block, &up, v, u).unwrap();
        // Zero biases, zero global: the unreached target stays zero.
        assert_eq!(tape.value(vt).row(1), &[0.0, 0.0]);
    }

    #[test]
    fn extent_mismatch_rejected() {
        let coarse = RoadGraph::from_parts(2, 2, vec![(0, 0)], vec![]).unwrap();
        let fine = RoadGraph::from_parts(2, 2, vec![(0, 0)], vec![]).unwrap();
        assert!(UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Center).is_err());
    }

    #[test]
    fn zero_input_zero_bias_upsamples_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fine = RoadGraph::from_street_map(&random_map(&mut rng, 6, 6, 0.5), Adjacency::Eight).unwrap();
        let coarse = pool_graph(&fine).unwrap().graph;
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Center).unwrap();
        let mut params = ParamSet::new();
        let block = GnBlock::register(&mut params, "up", GnDims::square(3, 2, 2), EdgeMode::Directional, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let v = tape.constant(Tensor::zeros([coarse.node_count(), 3]));
        let u = tape.constant(Tensor::zeros([1, 2]));
        let (vt, _) = upsample(&mut tape, &bound, &block, &up, v, u).unwrap();
        assert_eq!(tape.value(vt).shape(), &[fine.node_count(), 3]);
        assert_eq!(tape.value(vt).max_abs(), 0.0);
    }

    #[test]
    fn corner_anchor_needs_self_transform() {
        let coarse = RoadGraph::from_parts(1, 1, vec![(0, 0)], vec![]).unwrap();
        let fine = RoadGraph::from_parts(1, 1, vec![(0, 0)], vec![]).unwrap();
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Corner).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let block = GnBlock::register(&mut params, "up", GnDims::square(1, 1, 1), EdgeMode::Directional, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let v = tape.constant(Tensor::zeros([1, 1]));
        let u = tape.constant(Tensor::zeros([1, 1]));
        assert!(upsample(&mut tape, &bound, &block, &up, v, u).is_err());
    }

    fn affine_relu(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (rows, cols) = w.dims2().unwrap();
        assert_eq!(rows, x.len());
        (0..cols)
            .map(|j| ((0..rows).map(|i| x[i] * w.data()[i * cols + j]).sum::<f64>() + b.data()[j]).max(0.0))
            .collect()
    }

    #[test]
    fn single_coincident_pair_golden() {
        let coarse = RoadGraph::from_parts(1, 1, vec![(0, 0)], vec![]).unwrap();
        let fine = RoadGraph::from_parts(1, 1, vec![(0, 0)], vec![]).unwrap();
        let up = UpsamplingGraph::build(&coarse, &fine, UpsampleAnchor::Corner).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut params = ParamSet::new();
        let dims = GnDims::square(2, 2, 3);
        let block = GnBlock::register(&mut params, "up", dims, EdgeMode::DirectionalWithSelf, &mut rng).unwrap();
        for t in params.tensors_mut() {
            if t.rank() == 1 {
                t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.2..0.4));
            }
        }
        let v_in = [0.7, -0.4];
        let u = [0.2, 0.5, -0.1];
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let vv = tape.constant(Tensor::from_rows(&[v_in.to_vec()]).unwrap());
        let uv = tape.constant(Tensor::from_rows(&[u.to_vec()]).unwrap());
        let (vt, _) = upsample(&mut tape, &bound, &block, &up, vv, uv).unwrap();

        // Edge input: zero edge feature, zero receiver, the coarse sender, u.
        let mut x = vec![0.0, 0.0, 0.0, 0.0];
        x.extend_from_slice(&v_in);
        x.extend_from_slice(&u);
        let msg = affine_relu(&x, params.get("up.edge.SELF.W").unwrap(), params.get("up.edge.SELF.b").unwrap());
        // Node input: zero own feature, four empty quadrants, SELF aggregate, u.
        let mut x = vec![0.0; 2 + 8];
        x.extend_from_slice(&msg);
        x.extend_from_slice(&u);
        let expect = affine_relu(&x, params.get("up.node.W").unwrap(), params.get("up.node.b").unwrap());
        for (a, b) in tape.value(vt).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let fine = RoadGraph::from_street_map(&random_map(&mut rng, 5, 6, 0.6), Adjacency::Eight).unwrap();
        let coarse = pool_graph(&fine).unwrap().graph;
        for anchor in [UpsampleAnchor::Center, UpsampleAnchor::Corner] {
            let up = UpsamplingGraph::build(&coarse, &fine, anchor).unwrap();
            let mut params = ParamSet::new();
            let block = GnBlock::register(&mut params, "up", GnDims::square(3, 2, 2), anchor.edge_mode(), &mut rng).unwrap();
            for t in params.tensors_mut() {
                if t.rank() == 1 {
                    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.2..0.3));
                }
            }
            let v_id = params.insert("input.v", random_tensor(&mut rng, coarse.node_count(), 3)).unwrap();
            let u_id = params.insert("input.u", random_tensor(&mut rng, 1, 2)).unwrap();
            let c = random_tensor(&mut rng, fine.node_count(), 3);
            let report = check_gradients(
                &params,
                |tape, bound| {
                    let (vt, _) = upsample(tape, bound, &block, &up, bound.var(v_id), bound.var(u_id))?;
                    let c = tape.constant(c.clone());
                    let p = tape.mul(vt, c)?;
                    Ok(tape.sum(p))
                },
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.max_rel_error() <= 1e-5, "{anchor}: {report}");
        }
    }

    /// Brute force: every ordered pair of fine nodes, adjacent under
    /// 8-connectivity, lifted to windows.
    fn oracle(g: &RoadGraph, v: &Tensor, e: &Tensor) -> (BTreeMap<(usize, usize), Vec<f64>>, BTreeMap<((usize, usize), (usize, usize)), Vec<f64>>) {
        let mut nodes: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for (i, &(r, c)) in g.positions().iter().enumerate() {
            let slot = nodes.entry((r / 2, c / 2)).or_insert_with(|| vec![f64::NEG_INFINITY; v.shape()[1]]);
            for (s, x) in slot.iter_mut().zip(v.row(i)) {
                *s = s.max(*x);
            }
        }
        let mut edges: BTreeMap<((usize, usize), (usize, usize)), Vec<f64>> = BTreeMap::new();
        let n = g.node_count();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (g.positions()[i], g.positions()[j]);
                let adjacent = i != j && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1;
                let (wa, wb) = ((a.0 / 2, a.1 / 2), (b.0 / 2, b.1 / 2));
                if !adjacent || wa == wb {
                    continue;
                }
                let k = g.edges().position(|p| p == (i, j)).expect("adjacent pixels share an edge");
                let slot = edges.entry((wa, wb)).or_insert_with(|| vec![f64::NEG_INFINITY; e.shape()[1]]);
                for (s, x) in slot.iter_mut().zip(e.row(k)) {
                    *s = s.max(*x);
                }
            }
        }
        (nodes, edges)
    }

    #[test]
    fn pooling_matches_brute_force_oracle() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (rng.random_range(1..=12), rng.random_range(1..=12));
            let g = RoadGraph::from_street_map(&random_map(&mut rng, h, w, 0.45), Adjacency::Eight).unwrap();
            let v = random_tensor(&mut rng, g.node_count(), 3);
            let e = random_tensor(&mut rng, g.edge_count(), 2);
            let (p, vp, ep) = pool(&g, &v, &e).unwrap();
            let (nodes, edges) = oracle(&g, &v, &e);
            assert_eq!((p.graph.height(), p.graph.width()), (h.div_ceil(2), w.div_ceil(2)));
            let got_nodes: BTreeMap<_, _> = p.graph.positions().iter().enumerate().map(|(i, &pos)| (pos, vp.row(i).to_vec())).collect();
            assert_eq!(got_nodes, nodes, "seed {seed}");
            let got_edges: BTreeMap<_, _> = p
                .graph
                .edges()
                .enumerate()
                .map(|(k, (s, r))| ((p.graph.positions()[s], p.graph.positions()[r]), ep.row(k).to_vec()))
                .collect();
            assert_eq!(got_edges, edges, "seed {seed}");
            for (k, (s, r)) in p.graph.edges().enumerate() {
                let (a, b) = (p.graph.positions()[s], p.graph.positions()[r]);
                assert_eq!(p.graph.quadrants()[k], classify_edge(b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn upsampling_reaches_every_fine_node(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = RoadGraph::from_street_map(&random_map(&mut rng, h, w, 0.4), Adjacency::Eight).unwrap();
            let coarse = pool_graph(&g).unwrap().graph;
            for anchor in [UpsampleAnchor::Center, UpsampleAnchor::Corner] {
                let up = UpsamplingGraph::build(&coarse, &g, anchor).unwrap();
                let mut reached = vec![false; g.node_count()];
                for &r in up.receivers() {
                    reached[r - up.n_input()] = true;
                }
                prop_assert!(reached.iter().all(|&x| x));
            }
        }

        #[test]
        fn pooling_commutes_with_reflection(seed in any::<u64>(), h2 in 1usize..6, w2 in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = RoadGraph::from_street_map(&random_map(&mut rng, 2 * h2, 2 * w2, 0.5), Adjacency::Eight).unwrap();
            let v = random_tensor(&mut rng, g.node_count(), 2);
            let e = random_tensor(&mut rng, g.edge_count(), 2);
            let reverse = |t: &Tensor| {
                let mut out = Tensor::zeros(t.shape().to_vec());
                let (n, d) = t.dims2().unwrap();
                for i in 0..n {
                    out.data_mut()[(n - 1 - i) * d..(n - i) * d].copy_from_slice(t.row(i));
                }
                out
            };
            let (p, vp, ep) = pool(&g, &v, &e).unwrap();
            let (pm, vpm, epm) = pool(&g.mirrored(), &reverse(&v), &reverse(&e)).unwrap();
            prop_assert_eq!(&pm.graph, &p.graph.mirrored());
            prop_assert_eq!(vpm, reverse(&vp));
            prop_assert_eq!(epm, reverse(&ep));
        }

        #[test]
        fn center_labels_follow_reflection(seed in any::<u64>(), h2 in 1usize..6, w2 in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = RoadGraph::from_street_map(&random_map(&mut rng, 2 * h2, 2 * w2, 0.5), Adjacency::Eight).unwrap();
            let coarse = pool_graph(&g).unwrap().graph;
            let up = UpsamplingGraph::build(&coarse, &g, UpsampleAnchor::Center).unwrap();
            let upm = UpsamplingGraph::build(&coarse.mirrored(), &g.mirrored(), UpsampleAnchor::Center).unwrap();
            let mirrored: Vec<Quadrant> = up.quadrants().iter().rev().map(|q| q.mirrored()).collect();
            prop_assert_eq!(upm.quadrants(), &mirrored[..]);
        }
    }
}
