//! Road graphs built from street rasters.
//!
//! Nodes are street pixels, numbered in row-major scan order. Every pair of
//! adjacent street pixels yields two directed edges, and each edge carries the
//! geographic quadrant its displacement points into (north is decreasing row).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("empty road graph")]
    Empty,
    #[error("node position ({row}, {col}) outside {height}x{width} extent")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("duplicate node position ({0}, {1})")]
    DuplicatePosition(usize, usize),
    #[error("edge {edge} references node {node}, graph has {nodes} nodes")]
    BadEdge { edge: usize, node: usize, nodes: usize },
    #[error("raster of {height}x{width} has {len} pixels")]
    RasterSize { height: usize, width: usize, len: usize },
    #[error("extent mismatch: {0}")]
    Extent(String),
}

/// Geographic direction class of a directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    NorthEast,
    SouthEast,
    SouthWest,
    NorthWest,
    /// Zero displacement; only arises in upsampling graphs.
    Coincident,
}

impl Quadrant {
    /// The four directional quadrants in aggregation order.
    pub const DIRECTIONAL: [Quadrant; 4] = [
        Quadrant::NorthEast,
        Quadrant::SouthEast,
        Quadrant::SouthWest,
        Quadrant::NorthWest,
    ];

    pub const ALL: [Quadrant; 5] = [
        Quadrant::NorthEast,
        Quadrant::SouthEast,
        Quadrant::SouthWest,
        Quadrant::NorthWest,
        Quadrant::Coincident,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Image of the label under a point reflection of the plane.
    pub fn mirrored(self) -> Quadrant {
        match self {
            Quadrant::NorthEast => Quadrant::SouthWest,
            Quadrant::SouthWest => Quadrant::NorthEast,
            Quadrant::SouthEast => Quadrant::NorthWest,
            Quadrant::NorthWest => Quadrant::SouthEast,
            Quadrant::Coincident => Quadrant::Coincident,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::NorthEast => "NE",
            Quadrant::SouthEast => "SE",
            Quadrant::SouthWest => "SW",
            Quadrant::NorthWest => "NW",
            Quadrant::Coincident => "SELF",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Quadrant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.label() == s)
            .ok_or_else(|| format!("unknown quadrant `{s}`"))
    }
}

/// Quadrant of a displacement. Cardinal directions break ties clockwise
/// (E->NE, S->SE, W->SW, N->NW) so that negating the delta always maps the
/// label through [`Quadrant::mirrored`].
pub fn classify_edge(d_row: i64, d_col: i64) -> Quadrant {
    use std::cmp::Ordering::*;
    match (d_row.cmp(&0), d_col.cmp(&0)) {
        (Equal, Equal) => Quadrant::Coincident,
        (Less, Greater) | (Equal, Greater) => Quadrant::NorthEast,
        (Greater, Greater) | (Greater, Equal) => Quadrant::SouthEast,
        (Greater, Less) | (Equal, Less) => Quadrant::SouthWest,
        (Less, Less) | (Less, Equal) => Quadrant::NorthWest,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adjacency {
    Four,
    #[default]
    Eight,
}

impl Adjacency {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Adjacency::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Adjacency::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

impl FromStr for Adjacency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" => Ok(Adjacency::Four),
            "8" => Ok(Adjacency::Eight),
            _ => Err(format!("adjacency must be 4 or 8, got `{s}`")),
        }
    }
}

impl fmt::Display for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adjacency::Four => "4",
            Adjacency::Eight => "8",
        })
    }
}

/// Single-channel street raster; intensity 0 means no street.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreetMap {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl StreetMap {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, GraphError> {
        if pixels.len() != height * width {
            return Err(GraphError::RasterSize {
                height,
                width,
                len: pixels.len(),
            });
        }
        Ok(StreetMap {
            height,
            width,
            pixels,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Point reflection: (r, c) -> (H-1-r, W-1-c). Row-major storage makes
    /// this a reversal.
    pub fn mirrored(&self) -> StreetMap {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        StreetMap {
            height: self.height,
            width: self.width,
            pixels,
        }
    }
}

/// Directed graph over grid positions with quadrant-labelled edges.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    height: usize,
    width: usize,
    positions: Vec<(usize, usize)>,
    // Dense position -> node id lookup, u32::MAX for empty cells.
    lookup: Vec<u32>,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    quadrants: Vec<Quadrant>,
    by_quadrant: [Vec<usize>; 5],
}

impl RoadGraph {
    /// One node per pixel with positive intensity, one directed edge per
    /// ordered pair of adjacent street pixels.
    pub fn from_street_map(map: &StreetMap, adjacency: Adjacency) -> Result<Self, GraphError> {
        let mut positions = Vec::new();
        for r in 0..map.height {
            for c in 0..map.width {
                if map.at(r, c) > 0 {
                    positions.push((r, c));
                }
            }
        }
        if positions.is_empty() {
            return Err(GraphError::Empty);
        }
        let lookup = build_lookup(map.height, map.width, &positions)?;
        let mut edges = Vec::new();
        for (s, &(r, c)) in positions.iter().enumerate() {
            for &(dr, dc) in adjacency.offsets() {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= map.height as i64 || nc >= map.width as i64 {
                    continue;
                }
                let t = lookup[nr as usize * map.width + nc as usize];
                if t != u32::MAX {
                    edges.push((s, t as usize));
                }
            }
        }
        Self::assemble(map.height, map.width, positions, lookup, edges)
    }

    /// Graph from explicit node positions and directed edges. Labels are
    /// derived from the position deltas.
    pub fn from_parts(
        height: usize,
        width: usize,
        positions: Vec<(usize, usize)>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        if positions.is_empty() {
            return Err(GraphError::Empty);
        }
        let lookup = build_lookup(height, width, &positions)?;
        for (k, &(s, r)) in edges.iter().enumerate() {
            for node in [s, r] {
                if node >= positions.len() {
                    return Err(GraphError::BadEdge {
                        edge: k,
                        node,
                        nodes: positions.len(),
                    });
                }
            }
        }
        Self::assemble(height, width, positions, lookup, edges)
    }

    fn assemble(
        height: usize,
        width: usize,
        positions: Vec<(usize, usize)>,
        lookup: Vec<u32>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        let (senders, receivers): (Vec<_>, Vec<_>) = edges.into_iter().unzip();
        let quadrants: Vec<Quadrant> = senders
            .iter()
            .zip(&receivers)
            .map(|(&s, &r)| {
                let (sr, sc) = positions[s];
                let (rr, rc) = positions[r];
                classify_edge(rr as i64 - sr as i64, rc as i64 - sc as i64)
            })
            .collect();
        let by_quadrant = partition(&quadrants);
        Ok(RoadGraph {
            height,
            width,
            positions,
            lookup,
            senders,
            receivers,
            quadrants,
            by_quadrant,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.senders.len()
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn node_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.height || col >= self.width {
            return None;
        }
        let id = self.lookup[row * self.width + col];
        (id != u32::MAX).then_some(id as usize)
    }

    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    pub fn receivers(&self) -> &[usize] {
        &self.receivers
    }

    pub fn quadrants(&self) -> &[Quadrant] {
        &self.quadrants
    }

    /// Edge ids labelled `q`, ascending.
    pub fn quadrant_edges(&self, q: Quadrant) -> &[usize] {
        &self.by_quadrant[q.index()]
    }

    pub fn edges(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + ExactSizeIterator + '_ {
        self.senders.iter().copied().zip(self.receivers.iter().copied())
    }

    /// Point reflection of the graph. Node ids and edge order are reversed,
    /// which keeps row-major numbering for row-major inputs and makes the
    /// transform an exact involution.
    pub fn mirrored(&self) -> RoadGraph {
        let n = self.node_count();
        let positions: Vec<_> = self
            .positions
            .iter()
            .rev()
            .map(|&(r, c)| (self.height - 1 - r, self.width - 1 - c))
            .collect();
        let edges: Vec<_> = self.edges().rev().map(|(s, r)| (n - 1 - s, n - 1 - r)).collect();
        let lookup = build_lookup(self.height, self.width, &positions).expect("reflection preserves validity");
        Self::assemble(self.height, self.width, positions, lookup, edges).expect("reflection preserves validity")
    }

    /// Debug export, one `r1 c1 r2 c2 quadrant` line per edge.
    pub fn export_edges(&self) -> String {
        let mut out = String::new();
        for ((s, r), q) in self.edges().zip(&self.quadrants) {
            let (r1, c1) = self.positions[s];
            let (r2, c2) = self.positions[r];
            out.push_str(&format!("{r1} {c1} {r2} {c2} {q}\n"));
        }
        out
    }
}

fn build_lookup(height: usize, width: usize, positions: &[(usize, usize)]) -> Result<Vec<u32>, GraphError> {
    let mut lookup = vec![u32::MAX; height * width];
    for (i, &(row, col)) in positions.iter().enumerate() {
        if row >= height || col >= width {
            return Err(GraphError::OutOfBounds {
                row,
                col,
                height,
                width,
            });
        }
        let slot = &mut lookup[row * width + col];
        if *slot != u32::MAX {
            return Err(GraphError::DuplicatePosition(row, col));
        }
        *slot = i as u32;
    }
    Ok(lookup)
}

pub(crate) fn partition(quadrants: &[Quadrant]) -> [Vec<usize>; 5] {
    let mut parts: [Vec<usize>; 5] = Default::default();
    for (k, q) in quadrants.iter().enumerate() {
        parts[q.index()].push(k);
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, px: &[u8]) -> StreetMap {
        StreetMap::new(h, w, px.to_vec()).unwrap()
    }

    #[test]
    fn classify_table() {
        assert_eq!(classify_edge(-1, 1), Quadrant::NorthEast);
        assert_eq!(classify_edge(1, 1), Quadrant::SouthEast);
        assert_eq!(classify_edge(1, -1), Quadrant::SouthWest);
        assert_eq!(classify_edge(-1, -1), Quadrant::NorthWest);
        assert_eq!(classify_edge(0, 1), Quadrant::NorthEast);
        assert_eq!(classify_edge(1, 0), Quadrant::SouthEast);
        assert_eq!(classify_edge(0, -1), Quadrant::SouthWest);
        assert_eq!(classify_edge(-1, 0), Quadrant::NorthWest);
        assert_eq!(classify_edge(0, 0), Quadrant::Coincident);
    }

    #[test]
    fn two_pixel_street() {
        let g = RoadGraph::from_street_map(&map(1, 2, &[1, 1]), Adjacency::Four).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert_eq!(g.quadrants(), &[Quadrant::NorthEast, Quadrant::SouthWest]);
    }

    #[test]
    fn full_two_by_two_eight_adjacency() {
        let g = RoadGraph::from_street_map(&map(2, 2, &[1; 4]), Adjacency::Eight).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 12);
        let g4 = RoadGraph::from_street_map(&map(2, 2, &[1; 4]), Adjacency::Four).unwrap();
        assert_eq!(g4.edge_count(), 8);
    }

    #[test]
    fn isolated_center_pixel() {
        let mut px = [0u8; 9];
        px[4] = 200;
        let g = RoadGraph::from_street_map(&map(3, 3, &px), Adjacency::Eight).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.positions(), &[(1, 1)]);
    }

    #[test]
    fn empty_raster_is_error() {
        let err = RoadGraph::from_street_map(&map(2, 3, &[0; 6]), Adjacency::Eight).unwrap_err();
        assert_eq!(err, GraphError::Empty);
        assert_eq!(err.to_string(), "empty road graph");
    }

    #[test]
    fn mirror_two_pixel_street() {
        let g = RoadGraph::from_street_map(&map(1, 2, &[1, 1]), Adjacency::Four).unwrap();
        let m = g.mirrored();
        // Edge (0,0)->(0,1) becomes (0,1)->(0,0).
        let lines = m.export_edges();
        assert!(lines.contains("0 1 0 0 SW"));
        assert!(lines.contains("0 0 0 1 NE"));
        let k = m
            .edges()
            .position(|(s, r)| m.positions()[s] == (0, 1) && m.positions()[r] == (0, 0))
            .unwrap();
        assert_eq!(m.quadrants()[k], Quadrant::SouthWest);
    }

    #[test]
    fn export_format() {
        let g = RoadGraph::from_street_map(&map(1, 2, &[1, 1]), Adjacency::Four).unwrap();
        assert_eq!(g.export_edges(), "0 0 0 1 NE\n0 1 0 0 SW\n");
    }

    #[test]
    fn from_parts_validation() {
        assert_eq!(
            RoadGraph::from_parts(2, 2, vec![(0, 0), (0, 0)], vec![]).unwrap_err(),
            GraphError::DuplicatePosition(0, 0)
        );
        assert!(matches!(
            RoadGraph::from_parts(2, 2, vec![(2, 0)], vec![]),
            Err(GraphError::OutOfBounds { .. })
        ));
        assert!(matches!(
            RoadGraph::from_parts(2, 2, vec![(0, 0)], vec![(0, 1)]),
            Err(GraphError::BadEdge { .. })
        ));
    }

    #[test]
    fn quadrant_labels_parse() {
        for q in Quadrant::ALL {
            assert_eq!(q.label().parse::<Quadrant>().unwrap(), q);
        }
    }

    fn raster_strategy() -> impl Strategy<Value = StreetMap> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(prop_oneof![Just(0u8), 1u8..=255], h * w)
                .prop_map(move |px| StreetMap::new(h, w, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn reflection_commutes_with_classification(dr in -20i64..=20, dc in -20i64..=20) {
            prop_assert_eq!(classify_edge(-dr, -dc), classify_edge(dr, dc).mirrored());
        }

        #[test]
        fn quadrant_sets_partition_edges(m in raster_strategy(), eight in any::<bool>()) {
            let adj = if eight { Adjacency::Eight } else { Adjacency::Four };
            if let Ok(g) = RoadGraph::from_street_map(&m, adj) {
                let mut seen = vec![0u8; g.edge_count()];
                for q in Quadrant::ALL {
                    for &k in g.quadrant_edges(q) {
                        seen[k] += 1;
                        prop_assert_eq!(g.quadrants()[k], q);
                    }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
                prop_assert!(g.quadrant_edges(Quadrant::Coincident).is_empty());
            }
        }

        #[test]
        fn mirror_is_involution_and_maps_labels(m in raster_strategy()) {
            if let Ok(g) = RoadGraph::from_street_map(&m, Adjacency::Eight) {
                let mg = g.mirrored();
                prop_assert_eq!(&mg, &RoadGraph::from_street_map(&m.mirrored(), Adjacency::Eight).unwrap());
                prop_assert_eq!(&mg.mirrored(), &g);
                for (k, (s, r)) in g.edges().enumerate() {
                    let n = g.node_count();
                    let mk = mg.edge_count() - 1 - k;
                    prop_assert_eq!(mg.edges().nth(mk).unwrap(), (n - 1 - s, n - 1 - r));
                    prop_assert_eq!(mg.quadrants()[mk], g.quadrants()[k].mirrored());
                }
            }
        }
    }
}
