//! Initial node, edge and global features.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DataError, TrafficMovie, CHANNELS};
use crate::graph::{RoadGraph, StreetMap};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Scale applied to summed node features in the initial global state.
pub const GLOBAL_SUM_SCALE: f64 = 1e-5;

/// Output channels of the static street-map CNN.
pub const STATIC_CHANNELS: usize = 8;

const MINUTES_PER_DAY: u32 = 24 * 60;

/// Wall-clock time of a seed window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Timestamp {
    minute: u32,
    weekday: u8,
}

impl Timestamp {
    /// `minute` since midnight in `[0, 1440)`, `weekday` 0 (Monday) to 6.
    pub fn new(minute: u32, weekday: u8) -> Result<Self, DataError> {
        if minute >= MINUTES_PER_DAY {
            return Err(DataError::invalid(format!("minute {minute} outside [0, 1440)")));
        }
        if weekday > 6 {
            return Err(DataError::invalid(format!("weekday {weekday} outside 0..=6")));
        }
        Ok(Timestamp { minute, weekday })
    }

    pub fn minute(self) -> u32 {
        self.minute
    }

    pub fn weekday(self) -> u8 {
        self.weekday
    }
}

/// Position on the unit circle for a time of day.
pub fn encode_time(minute: f64) -> [f64; 2] {
    let theta = 2.0 * PI * minute / f64::from(MINUTES_PER_DAY);
    [theta.sin(), theta.cos()]
}

/// Plain-tensor feature triple for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    /// `[N, d_v]`
    pub v: Tensor,
    /// `[M, d_e]`
    pub e: Tensor,
    /// `[1, d_u]`
    pub u: Tensor,
}

impl GraphState {
    pub fn all_finite(&self) -> bool {
        self.v.all_finite() && self.e.all_finite() && self.u.all_finite()
    }
}

/// `[N, in_frames * 8]`: each node's pixel over the seed frames, scaled to `[0, 1]`.
pub fn init_node_features(
    movie: &TrafficMovie,
    start: usize,
    in_frames: usize,
    graph: &RoadGraph,
) -> Result<Tensor, DataError> {
    if in_frames == 0 || start + in_frames > movie.frames() {
        return Err(DataError::invalid(format!(
            "seed window {start}..{} exceeds movie length {}",
            start + in_frames,
            movie.frames()
        )));
    }
    if movie.height() != graph.height() || movie.width() != graph.width() {
        return Err(DataError::invalid(format!(
            "movie is {}x{}, graph is {}x{}",
            movie.height(),
            movie.width(),
            graph.height(),
            graph.width()
        )));
    }
    let dim = in_frames * CHANNELS;
    let mut data = Vec::with_capacity(graph.node_count() * dim);
    for &(r, c) in graph.positions() {
        for t in start..start + in_frames {
            data.extend(movie.pixel(t, r, c).iter().map(|&v| f64::from(v) / 255.0));
        }
    }
    Ok(Tensor::new(vec![graph.node_count(), dim], data).expect("sized buffer"))
}

/// Kernels and biases of the two-layer street-map CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticCnnParams {
    /// `[3, 3, 1, 8]`
    pub conv1_w: Tensor,
    /// `[8]`
    pub conv1_b: Tensor,
    /// `[3, 3, 8, 8]`
    pub conv2_w: Tensor,
    /// `[8]`
    pub conv2_b: Tensor,
}

impl StaticCnnParams {
    pub fn zeros() -> Self {
        StaticCnnParams {
            conv1_w: Tensor::zeros([3, 3, 1, STATIC_CHANNELS]),
            conv1_b: Tensor::zeros([STATIC_CHANNELS]),
            conv2_w: Tensor::zeros([3, 3, STATIC_CHANNELS, STATIC_CHANNELS]),
            conv2_b: Tensor::zeros([STATIC_CHANNELS]),
        }
    }

    /// He-style normal init, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut p = Self::zeros();
        for (w, fan_in) in [(&mut p.conv1_w, 9.0), (&mut p.conv2_w, 9.0 * STATIC_CHANNELS as f64)] {
            let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            w.data_mut().iter_mut().for_each(|x| *x = dist.sample(rng));
        }
        p
    }
}

/// Rotates a `[K, K, Cin, Cout]` kernel by 180 degrees.
pub fn reflect_kernel(kernel: &Tensor) -> Tensor {
    let &[k, k2, cin, cout] = kernel.shape() else {
        panic!("reflect_kernel expects a rank-4 kernel, got {:?}", kernel.shape());
    };
    assert_eq!(k, k2, "square kernel");
    let block = cin * cout;
    let mut out = vec![0.0; kernel.numel()];
    for ky in 0..k {
        for kx in 0..k {
            let src = (ky * k + kx) * block;
            let dst = ((k - 1 - ky) * k + (k - 1 - kx)) * block;
            out[dst..dst + block].copy_from_slice(&kernel.data()[src..src + block]);
        }
    }
    Tensor::new(kernel.shape().to_vec(), out).expect("same shape")
}

/// `[H, W, 1]` raster scaled to `[0, 1]`.
pub fn street_raster(map: &StreetMap) -> Tensor {
    let data = map.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Tensor::new(vec![map.height, map.width, 1], data).expect("sized raster")
}

/// Two same-padded 3x3 convolutions with ReLU after each. Returns `[H, W, 8]`.
pub fn static_cnn(tape: &mut Tape, raster: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var, TensorError> {
    let h = tape.conv2d(raster, w1, b1)?;
    let h = tape.relu(h);
    let h = tape.conv2d(h, w2, b2)?;
    Ok(tape.relu(h))
}

/// `[M, 16]`: sender then receiver static features per directed edge.
pub fn init_edge_features(tape: &mut Tape, vtilde: Var, graph: &RoadGraph) -> Result<Var, TensorError> {
    let shape = tape.value(vtilde).shape().to_vec();
    let &[h, w, ch] = shape.as_slice() else {
        return Err(TensorError::invalid("init_edge_features", format!("expected [H, W, C], got {shape:?}")));
    };
    if h != graph.height() || w != graph.width() {
        return Err(TensorError::shape("init_edge_features", &shape, &[graph.height(), graph.width()]));
    }
    let flat = tape.reshape(vtilde, &[h * w, ch])?;
    let pixel = |n: usize| {
        let (r, c) = graph.positions()[n];
        r * w + c
    };
    let send: Vec<usize> = graph.senders().iter().map(|&s| pixel(s)).collect();
    let recv: Vec<usize> = graph.receivers().iter().map(|&r| pixel(r)).collect();
    let vs = tape.gather_rows(flat, &send)?;
    let vr = tape.gather_rows(flat, &recv)?;
    tape.concat(&[vs, vr])
}

/// Convenience wrapper running the CNN and edge features on plain tensors.
pub fn edge_features(map: &StreetMap, params: &StaticCnnParams, graph: &RoadGraph) -> Result<Tensor, TensorError> {
    let mut tape = Tape::new();
    let raster = tape.constant(street_raster(map));
    let w1 = tape.constant(params.conv1_w.clone());
    let b1 = tape.constant(params.conv1_b.clone());
    let w2 = tape.constant(params.conv2_w.clone());
    let b2 = tape.constant(params.conv2_b.clone());
    let vt = static_cnn(&mut tape, raster, w1, b1, w2, b2)?;
    let e = init_edge_features(&mut tape, vt, graph)?;
    Ok(tape.value(e).clone())
}

/// `[1, d_v + 9]`: scaled node-feature sum, time of day, weekday one-hot.
pub fn init_global(v: &Tensor, ts: Timestamp) -> Tensor {
    let (n, d) = v.dims2().expect("node features are a matrix");
    let mut out = vec![0.0; d + 9];
    for i in 0..n {
        for (o, x) in out.iter_mut().zip(v.row(i)) {
            *o += x;
        }
    }
    out[..d].iter_mut().for_each(|x| *x *= GLOBAL_SUM_SCALE);
    let [s, c] = encode_time(f64::from(ts.minute()));
    out[d] = s;
    out[d + 1] = c;
    out[d + 2 + ts.weekday() as usize] = 1.0;
    Tensor::new(vec![1, d + 9], out).expect("sized buffer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn time_encoding_points() {
        assert!(close(encode_time(0.0), [0.0, 1.0]));
        assert!(close(encode_time(360.0), [1.0, 0.0]));
        assert!(close(encode_time(720.0), [0.0, -1.0]));
    }

    #[test]
    fn timestamp_ranges() {
        assert!(Timestamp::new(1439, 6).is_ok());
        assert!(Timestamp::new(1440, 0).is_err());
        assert!(Timestamp::new(0, 7).is_err());
    }

    fn line_graph() -> RoadGraph {
        RoadGraph::from_street_map(&StreetMap::new(1, 2, vec![255, 255]).unwrap(), Adjacency::Eight).unwrap()
    }

    #[test]
    fn node_features_scale_and_layout() {
        let g = line_graph();
        let mut m = TrafficMovie::zeros(13, 1, 2);
        m.pixel_mut(1, 0, 1)[3] = 255;
        let v = init_node_features(&m, 1, 12, &g).unwrap();
        assert_eq!(v.shape(), &[2, 96]);
        assert_eq!(v.row(1)[3], 1.0);
        assert_eq!(v.data().iter().filter(|&&x| x != 0.0).count(), 1);
        assert!(init_node_features(&m, 2, 12, &g).is_err());
        let zero = init_node_features(&TrafficMovie::zeros(12, 1, 2), 0, 12, &g).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn zero_raster_gives_zero_static_features() {
        let map = StreetMap::new(3, 3, vec![0; 9]).unwrap();
        let g = RoadGraph::from_parts(3, 3, vec![(0, 0), (0, 1)], vec![(0, 1), (1, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = edge_features(&map, &StaticCnnParams::init(&mut rng), &g).unwrap();
        assert_eq!(e.shape(), &[2, 16]);
        assert_eq!(e.max_abs(), 0.0);
    }

    #[test]
    fn first_layer_identity_kernel() {
        let map = StreetMap::new(2, 3, vec![0, 51, 102, 153, 204, 255]).unwrap();
        let mut k = Tensor::zeros([3, 3, 1, 8]);
        k.data_mut()[(1 * 3 + 1) * 8 + 2] = 1.0;
        let mut tape = Tape::new();
        let x = tape.constant(street_raster(&map));
        let kv = tape.constant(k);
        let b = tape.constant(Tensor::zeros([8]));
        let y = tape.conv2d(x, kv, b).unwrap();
        let out = tape.value(y);
        for p in 0..6 {
            assert!((out.data()[p * 8 + 2] - f64::from(map.pixels[p]) / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn swapped_edge_swaps_blocks() {
        let map = StreetMap::new(1, 2, vec![255, 40]).unwrap();
        let g = line_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = StaticCnnParams::init(&mut rng);
        p.conv1_b = Tensor::full([8], 0.1);
        p.conv2_b = Tensor::full([8], 0.1);
        let e = edge_features(&map, &p, &g).unwrap();
        assert_eq!(&e.row(0)[..8], &e.row(1)[8..]);
        assert_eq!(&e.row(0)[8..], &e.row(1)[..8]);
        assert!(e.max_abs() > 0.0);
    }

    fn slot(p: &mut StaticCnnParams, which: usize) -> &mut Tensor {
        match which {
            0 => &mut p.conv1_w,
            1 => &mut p.conv1_b,
            2 => &mut p.conv2_w,
            _ => &mut p.conv2_b,
        }
    }

    #[test]
    fn static_cnn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pixels = (0..20).map(|_| rng.random_range(0..=255u8)).collect();
        let map = StreetMap::new(4, 5, pixels).unwrap();
        let mut p = StaticCnnParams::init(&mut rng);
        p.conv1_b = Tensor::full([8], 0.05);
        p.conv2_b = Tensor::full([8], 0.05);
        let eval = |p: &StaticCnnParams| -> (f64, Vec<Tensor>) {
            let mut tape = Tape::new();
            let x = tape.constant(street_raster(&map));
            let vars = [
                tape.param(p.conv1_w.clone()),
                tape.param(p.conv1_b.clone()),
                tape.param(p.conv2_w.clone()),
                tape.param(p.conv2_b.clone()),
            ];
            let y = static_cnn(&mut tape, x, vars[0], vars[1], vars[2], vars[3]).unwrap();
            let s = tape.sum(y);
            let mut g = tape.backward(s).unwrap();
            let grads = vars.iter().map(|&v| g.take(v).unwrap()).collect();
            (tape.value(s).item().unwrap(), grads)
        };
        let (_, grads) = eval(&p);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for which in 0..4 {
            let n = grads[which].numel();
            for i in (0..n).step_by(7) {
                let mut plus = p.clone();
                let mut minus = p.clone();
                slot(&mut plus, which).data_mut()[i] += h;
                slot(&mut minus, which).data_mut()[i] -= h;
                let num = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let ana = grads[which].data()[i];
                worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-3));
            }
        }
        assert!(worst <= 1e-5, "relative error {worst}");
    }

    #[test]
    fn global_init_examples() {
        let g = init_global(&Tensor::zeros([3, 4]), Timestamp::new(0, 0).unwrap());
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut v = Tensor::zeros([2, 2]);
        v.data_mut()[1] = 6e4;
        v.data_mut()[3] = 4e4;
        let g = init_global(&v, Timestamp::new(100, 3).unwrap());
        assert!((g.data()[1] - 1.0).abs() < 1e-12);
        let onehot = &g.data()[4..];
        assert_eq!(onehot, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn kernel_reflection_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = StaticCnnParams::init(&mut rng);
        assert_eq!(reflect_kernel(&reflect_kernel(&p.conv2_w)), p.conv2_w);
        assert_ne!(reflect_kernel(&p.conv2_w), p.conv2_w);
    }

    proptest! {
        #[test]
        fn time_encoding_periodic_on_circle(t in 0.0f64..1440.0) {
            let [s, c] = encode_time(t);
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
            let [s2, c2] = encode_time(t + 1440.0);
            prop_assert!((s - s2).abs() < 1e-9 && (c - c2).abs() < 1e-9);
        }
    }
}
