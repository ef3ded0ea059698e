//! Direction-sensitive graph network block.
//!
//! Each quadrant has its own edge transform. Node updates see the incoming
//! messages summed per quadrant and concatenated in `NE, SE, SW, NW[, SELF]`
//! order; the global update sees `u`, the summed new node features and the
//! per-quadrant sums of all new edge features. In shared mode a single edge
//! transform `edge.all` replaces the quadrant transforms and the aggregates
//! collapse to one block.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Quadrant, RoadGraph};
use crate::tensor::{BoundParams, ParamId, ParamSet, Tape, Tensor, Var};

/// Edge topology a block can run on.
pub trait MessageGraph {
    fn node_count(&self) -> usize;
    fn edge_count(&self) -> usize;
    fn senders(&self) -> &[usize];
    fn receivers(&self) -> &[usize];
    fn quadrant_edges(&self, q: Quadrant) -> &[usize];
}

impl MessageGraph for RoadGraph {
    fn node_count(&self) -> usize {
        RoadGraph::node_count(self)
    }
    fn edge_count(&self) -> usize {
        RoadGraph::edge_count(self)
    }
    fn senders(&self) -> &[usize] {
        RoadGraph::senders(self)
    }
    fn receivers(&self) -> &[usize] {
        RoadGraph::receivers(self)
    }
    fn quadrant_edges(&self, q: Quadrant) -> &[usize] {
        RoadGraph::quadrant_edges(self, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnDims {
    pub node_in: usize,
    pub edge_in: usize,
    pub global_in: usize,
    pub node_out: usize,
    pub edge_out: usize,
    pub global_out: usize,
}

impl GnDims {
    /// Same width in and out.
    pub fn square(node: usize, edge: usize, global: usize) -> Self {
        GnDims {
            node_in: node,
            edge_in: edge,
            global_in: global,
            node_out: node,
            edge_out: edge,
            global_out: global,
        }
    }
}

/// Which edge transforms a block owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// One transform per directional quadrant.
    Directional,
    /// Directional plus a transform for zero-displacement edges.
    DirectionalWithSelf,
    /// A single transform for every edge.
    Shared,
}

impl EdgeMode {
    fn groups(self) -> &'static [Option<Quadrant>] {
        const DIR: [Option<Quadrant>; 4] = [
            Some(Quadrant::NorthEast),
            Some(Quadrant::SouthEast),
            Some(Quadrant::SouthWest),
            Some(Quadrant::NorthWest),
        ];
        const DIR_SELF: [Option<Quadrant>; 5] = [
            Some(Quadrant::NorthEast),
            Some(Quadrant::SouthEast),
            Some(Quadrant::SouthWest),
            Some(Quadrant::NorthWest),
            Some(Quadrant::Coincident),
        ];
        match self {
            EdgeMode::Directional => &DIR,
            EdgeMode::DirectionalWithSelf => &DIR_SELF,
            EdgeMode::Shared => &[None],
        }
    }

    /// Number of aggregate blocks seen by the node and global updates.
    pub fn aggregates(self) -> usize {
        self.groups().len()
    }
}

fn group_label(g: Option<Quadrant>) -> &'static str {
    g.map_or("all", Quadrant::label)
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

impl Affine {
    fn register<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        let dist = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("positive std");
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        Ok(Affine {
            w: params.insert(format!("{name}.W"), Tensor::new(vec![fan_in, fan_out], w)?)?,
            b: params.insert(format!("{name}.b"), Tensor::zeros([fan_out]))?,
        })
    }

    fn apply(self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.w))?;
        let y = tape.add_bias(y, bound.var(self.b))?;
        Ok(tape.relu(y))
    }
}

/// Node, edge and global features as tape variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarState {
    pub v: Var,
    pub e: Var,
    pub u: Var,
}

/// Handles to one block's parameters inside a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct GnBlock {
    name: String,
    dims: GnDims,
    mode: EdgeMode,
    edge: Vec<Affine>,
    node: Affine,
    global: Affine,
}

impl GnBlock {
    /// Inserts freshly initialised parameters named `{name}.edge.{Q}`,
    /// `{name}.node` and `{name}.global`.
    pub fn register<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, dims: GnDims, mode: EdgeMode, rng: &mut R) -> Result<Self> {
        let q = mode.aggregates();
        let edge_in = dims.edge_in + 2 * dims.node_in + dims.global_in;
        let edge = mode
            .groups()
            .iter()
            .map(|&g| Affine::register(params, &format!("{name}.edge.{}", group_label(g)), edge_in, dims.edge_out, rng))
            .collect::<Result<Vec<_>>>()?;
        let node = Affine::register(
            params,
            &format!("{name}.node"),
            dims.node_in + q * dims.edge_out + dims.global_in,
            dims.node_out,
            rng,
        )?;
        let global = Affine::register(
            params,
            &format!("{name}.global"),
            dims.global_in + dims.node_out + q * dims.edge_out,
            dims.global_out,
            rng,
        )?;
        // Rows reading the graph-wide sums start at zero: those sums scale
        // with the node count and would otherwise compound block to block.
        let w = params.tensor_mut(global.w);
        w.data_mut()[dims.global_in * dims.global_out..].fill(0.0);
        Ok(GnBlock {
            name: name.to_string(),
            dims,
            mode,
            edge,
            node,
            global,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> GnDims {
        self.dims
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    fn check(&self, tape: &Tape, x: Var, what: &str, rows: usize, cols: usize) -> Result<()> {
        let shape = tape.value(x).shape();
        if shape != [rows, cols] {
            return Err(Error::dimension(
                format!("{}.{what}", self.name),
                format!("expected input [{rows}, {cols}], got {shape:?}"),
            ));
        }
        Ok(())
    }

    pub fn forward<G: MessageGraph + ?Sized>(&self, tape: &mut Tape, bound: &BoundParams, graph: &G, state: VarState) -> Result<VarState> {
        let d = self.dims;
        let (n, m) = (graph.node_count(), graph.edge_count());
        self.check(tape, state.v, "node", n, d.node_in)?;
        self.check(tape, state.e, "edge", m, d.edge_in)?;
        self.check(tape, state.u, "global", 1, d.global_in)?;
        if self.mode == EdgeMode::Directional && !graph.quadrant_edges(Quadrant::Coincident).is_empty() {
            return Err(Error::dimension(
                format!("{}.edge.SELF", self.name),
                "graph has zero-displacement edges but the block has no SELF transform",
            ));
        }

        let all_edges: Vec<usize> = if self.mode == EdgeMode::Shared { (0..m).collect() } else { Vec::new() };
        let mut node_aggs = Vec::with_capacity(self.edge.len());
        let mut global_aggs = Vec::with_capacity(self.edge.len());
        let mut e_new: Option<Var> = None;
        for (&group, &transform) in self.mode.groups().iter().zip(&self.edge) {
            let idx: &[usize] = match group {
                Some(q) => graph.quadrant_edges(q),
                None => &all_edges,
            };
            if idx.is_empty() {
                node_aggs.push(tape.constant(Tensor::zeros([n, d.edge_out])));
                global_aggs.push(tape.constant(Tensor::zeros([1, d.edge_out])));
                continue;
            }
            let recv: Vec<usize> = idx.iter().map(|&k| graph.receivers()[k]).collect();
            let send: Vec<usize> = idx.iter().map(|&k| graph.senders()[k]).collect();
            let eg = tape.gather_rows(state.e, idx)?;
            let vr = tape.gather_rows(state.v, &recv)?;
            let vs = tape.gather_rows(state.v, &send)?;
            let ub = tape.gather_rows(state.u, &vec![0; idx.len()])?;
            let x = tape.concat(&[eg, vr, vs, ub])?;
            let y = transform.apply(tape, bound, x)?;
            node_aggs.push(tape.segment_sum(y, &recv, n)?);
            global_aggs.push(tape.sum_rows(y)?);
            let placed = if group.is_none() { y } else { tape.scatter_rows(y, idx, m)? };
            e_new = Some(match e_new {
                Some(acc) => tape.add(acc, placed)?,
                None => placed,
            });
        }
        let e_new = match e_new {
            Some(e) => e,
            None => tape.constant(Tensor::zeros([m, d.edge_out])),
        };

        let un = tape.gather_rows(state.u, &vec![0; n])?;
        let mut parts = Vec::with_capacity(node_aggs.len() + 2);
        parts.push(state.v);
        parts.extend(node_aggs);
        parts.push(un);
        let x = tape.concat(&parts)?;
        let v_new = self.node.apply(tape, bound, x)?;

        let v_sum = tape.sum_rows(v_new)?;
        let mut parts = Vec::with_capacity(global_aggs.len() + 2);
        parts.push(state.u);
        parts.push(v_sum);
        parts.extend(global_aggs);
        let x = tape.concat(&parts)?;
        let u_new = self.global.apply(tape, bound, x)?;

        Ok(VarState {
            v: v_new,
            e: e_new,
            u: u_new,
        })
    }

    /// Rewrites this block's parameters for the point-reflected graph:
    /// quadrant transforms trade places under the reflection and the
    /// aggregate row blocks of the node and global weights follow.
    pub fn mirror_params(&self, params: &mut ParamSet) {
        if self.mode == EdgeMode::Shared {
            return;
        }
        let groups = self.mode.groups();
        let perm: Vec<usize> = groups
            .iter()
            .map(|g| {
                let m = g.expect("directional group").mirrored();
                groups.iter().position(|h| *h == Some(m)).expect("closed under reflection")
            })
            .collect();
        let old: Vec<(Tensor, Tensor)> = self
            .edge
            .iter()
            .map(|a| (params.tensor(a.w).clone(), params.tensor(a.b).clone()))
            .collect();
        for (i, a) in self.edge.iter().enumerate() {
            *params.tensor_mut(a.w) = old[perm[i]].0.clone();
            *params.tensor_mut(a.b) = old[perm[i]].1.clone();
        }
        let d = self.dims;
        permute_row_blocks(params.tensor_mut(self.node.w), d.node_in, d.edge_out, &perm);
        permute_row_blocks(params.tensor_mut(self.global.w), d.global_in + d.node_out, d.edge_out, &perm);
    }
}

/// Row block `i` (of `block` rows starting at `offset`) becomes old block `perm[i]`.
pub(crate) fn permute_row_blocks(t: &mut Tensor, offset: usize, block: usize, perm: &[usize]) {
    let (_, cols) = t.dims2().expect("weight matrix");
    let old = t.data().to_vec();
    let stride = block * cols;
    for (i, &p) in perm.iter().enumerate() {
        let dst = offset * cols + i * stride;
        let src = offset * cols + p * stride;
        t.data_mut()[dst..dst + stride].copy_from_slice(&old[src..src + stride]);
    }
}

/// Runs one block on plain tensors.
pub fn gn_forward<G: MessageGraph + ?Sized>(
    block: &GnBlock,
    params: &ParamSet,
    graph: &G,
    v: &Tensor,
    e: &Tensor,
    u: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let state = VarState {
        v: tape.constant(v.clone()),
        e: tape.constant(e.clone()),
        u: tape.constant(u.clone()),
    };
    let out = block.forward(&mut tape, &bound, graph, state)?;
    Ok((tape.value(out.v).clone(), tape.value(out.e).clone(), tape.value(out.u).clone()))
}
