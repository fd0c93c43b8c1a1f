//! Space-time mesh over one coarse time step.
//!
//! Leaves of the [`RefinementTree`] are space-time elements: a spatial cell
//! at `level_s` times a time slab at `level_t`. Elements of one spatial leaf
//! form a *column*, stored contiguously in chronological order. Interfaces
//! between adjacent columns are cut into [`SubFace`]s by intersecting the
//! traces of both sides, so a sub-face has exactly one element on each
//! side.
//!
//! Geometry is tracked in integer *finest units*: a coarse cell spans
//! `2^Ls_max` finest cells per direction and a coarse step spans
//! `2^Lt_max` finest time units.

mod mosaic;
mod transfer;
mod tree;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use mosaic::{interface_mosaic, FaceRect};
pub use transfer::{project_state, restrict_to_coarse};
pub use tree::{NodeId, RefinementTree, TimeNodeId};

use crate::error::{Error, Result};

/// Refinement ratio between consecutive levels, in space (per direction)
/// and in time.
pub const REFINEMENT_RATIO: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub nx: usize,
    pub ny: usize,
    /// Coarse cell size, ft.
    pub dx: f64,
    pub dy: f64,
    /// ft
    pub thickness: f64,
    /// Coarse time step, days.
    pub dt: f64,
    /// Index of the coarse step this mesh covers.
    pub step: usize,
    pub origin: [f64; 2],
}

impl CoarseGrid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, dt: f64) -> Self {
        Self {
            nx,
            ny,
            dx,
            dy,
            thickness: 1.0,
            dt,
            step: 0,
            origin: [0.0, 0.0],
        }
    }

    pub fn at_step(mut self, step: usize) -> Self {
        self.step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidGrid(format!("{}x{} cells", self.nx, self.ny)));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("dt", self.dt), ("thickness", self.thickness)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        self.step as f64 * self.dt
    }
}

/// Maximum refinement levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshLevels {
    pub space: u8,
    pub time: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpatialCell {
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

impl SpatialCell {
    pub fn children(self) -> [SpatialCell; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            SpatialCell { level: l, i, j },
            SpatialCell { level: l, i: i + 1, j },
            SpatialCell { level: l, i, j: j + 1 },
            SpatialCell { level: l, i: i + 1, j: j + 1 },
        ]
    }

    /// Half-open x and y ranges in finest cells.
    pub fn fine_range(self, max_level: u8) -> ([u32; 2], [u32; 2]) {
        let s = 1u32 << (max_level - self.level);
        ([self.i * s, (self.i + 1) * s], [self.j * s, (self.j + 1) * s])
    }

    /// The ancestor (or self) at `level`.
    pub fn at_level(self, level: u8) -> SpatialCell {
        debug_assert!(level <= self.level);
        let shift = self.level - level;
        SpatialCell {
            level,
            i: self.i >> shift,
            j: self.j >> shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeSlab {
    pub level: u8,
    pub k: u32,
}

impl TimeSlab {
    pub fn children(self) -> [TimeSlab; 2] {
        [
            TimeSlab { level: self.level + 1, k: 2 * self.k },
            TimeSlab { level: self.level + 1, k: 2 * self.k + 1 },
        ]
    }

    pub fn fine_range(self, max_level: u8) -> [u32; 2] {
        let s = 1u32 << (max_level - self.level);
        [self.k * s, (self.k + 1) * s]
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub node: NodeId,
    pub cell: SpatialCell,
    pub elements: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Element {
    pub id: usize,
    pub column: usize,
    pub cell: SpatialCell,
    pub slab: TimeSlab,
    pub time_node: TimeNodeId,
    /// ft × ft
    pub size: [f64; 2],
    pub center: [f64; 2],
    /// ft³
    pub volume: f64,
    /// days
    pub t_start: f64,
    pub duration: f64,
}

impl Element {
    pub fn level_s(&self) -> u8 {
        self.cell.level
    }

    pub fn level_t(&self) -> u8 {
        self.slab.level
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Normal along +x; `left` is west, `right` is east.
    X,
    /// Normal along +y; `left` is south, `right` is north.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Side::West | Side::East => Orientation::X,
            Side::South | Side::North => Orientation::Y,
        }
    }
}

/// Piece of an element face. Interior sub-faces carry one flux unknown per
/// phase, positive from `left` to `right`. Boundary sub-faces are no-flow.
#[derive(Debug, Clone)]
pub struct SubFace {
    pub id: usize,
    pub orientation: Orientation,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Coordinate of the face line, finest spatial units.
    pub position: u32,
    pub rect: FaceRect,
    /// ft
    pub length: f64,
    /// ft² (length × thickness)
    pub area: f64,
    /// days
    pub duration: f64,
    /// ft²·day
    pub measure: f64,
}

impl SubFace {
    pub fn is_interior(&self) -> bool {
        self.left.is_some() && self.right.is_some()
    }

    /// Both elements of an interior face.
    pub fn pair(&self) -> Option<(usize, usize)> {
        Some((self.left?, self.right?))
    }
}

/// One face of an element as seen from that element.
#[derive(Debug, Clone, Copy)]
pub struct FaceRef {
    pub subface: usize,
    pub side: Side,
    /// +1 if the face flux leaves the element when positive.
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct SpaceTimeMesh {
    grid: CoarseGrid,
    levels: MeshLevels,
    tree: RefinementTree,
    columns: Vec<Column>,
    elements: Vec<Element>,
    subfaces: Vec<SubFace>,
    face_offsets: Vec<usize>,
    face_refs: Vec<FaceRef>,
    fine_lookup: Vec<u32>,
}

impl SpaceTimeMesh {
    /// All elements at level 0 in space and time.
    pub fn build_coarse(grid: CoarseGrid, levels: MeshLevels) -> Result<Self> {
        grid.validate()?;
        if levels.space > 12 || levels.time > 20 {
            return Err(Error::InvalidGrid(format!("refinement levels {levels:?} too deep")));
        }
        Ok(Self::from_tree(grid, levels, RefinementTree::new(grid.nx, grid.ny)))
    }

    /// Every element at the maximum levels.
    pub fn build_uniform_fine(grid: CoarseGrid, levels: MeshLevels) -> Result<Self> {
        Self::build_uniform(grid, levels, levels.space, levels.time)
    }

    /// Every element at the given space/time levels.
    pub fn build_uniform(grid: CoarseGrid, levels: MeshLevels, space: u8, time: u8) -> Result<Self> {
        if space > levels.space || time > levels.time {
            return Err(Error::InvalidGrid("uniform level exceeds maximum".into()));
        }
        let mesh = Self::build_coarse(grid, levels)?;
        let mut tree = mesh.tree;
        let mut frontier: Vec<NodeId> = tree.spatial_leaves();
        for _ in 0..space {
            let mut next = Vec::new();
            for id in frontier {
                tree.split_space(id);
                next.extend(tree.node(id).children.expect("just split"));
            }
            frontier = next;
        }
        for _ in 0..time {
            for id in tree.spatial_leaves() {
                for t in tree.time_leaves(tree.node(id).time_root) {
                    tree.split_time(t);
                }
            }
        }
        Ok(Self::from_tree(grid, levels, tree))
    }

    pub fn from_tree(grid: CoarseGrid, levels: MeshLevels, tree: RefinementTree) -> Self {
        let ls = levels.space;
        let lt = levels.time;
        let nxf = (grid.nx as u32) << ls;
        let nyf = (grid.ny as u32) << ls;
        let dxf = grid.dx / (1u32 << ls) as f64;
        let dyf = grid.dy / (1u32 << ls) as f64;
        let dtf = grid.dt / (1u32 << lt) as f64;
        let t0 = grid.t_start();

        let mut columns = Vec::new();
        let mut elements = Vec::new();
        let mut fine_lookup = vec![u32::MAX; (nxf * nyf) as usize];
        for node_id in tree.spatial_leaves() {
            let node = tree.node(node_id);
            let cell = node.cell;
            let col = columns.len();
            let first = elements.len();
            let scale = (1u32 << (ls - cell.level)) as f64;
            let size = [dxf * scale, dyf * scale];
            let ([x0, x1], [y0, y1]) = cell.fine_range(ls);
            let center = [
                grid.origin[0] + (x0 as f64 + 0.5 * (x1 - x0) as f64) * dxf,
                grid.origin[1] + (y0 as f64 + 0.5 * (y1 - y0) as f64) * dyf,
            ];
            for t in tree.time_leaves(node.time_root) {
                let slab = tree.time_node(t).slab;
                let [a, b] = slab.fine_range(lt);
                elements.push(Element {
                    id: elements.len(),
                    column: col,
                    cell,
                    slab,
                    time_node: t,
                    size,
                    center,
                    volume: size[0] * size[1] * grid.thickness,
                    t_start: t0 + a as f64 * dtf,
                    duration: (b - a) as f64 * dtf,
                });
            }
            for y in y0..y1 {
                for x in x0..x1 {
                    fine_lookup[(y * nxf + x) as usize] = col as u32;
                }
            }
            columns.push(Column {
                node: node_id,
                cell,
                elements: first..elements.len(),
            });
        }

        let mut mesh = Self {
            grid,
            levels,
            tree,
            columns,
            elements,
            subfaces: Vec::new(),
            face_offsets: Vec::new(),
            face_refs: Vec::new(),
            fine_lookup,
        };
        mesh.build_subfaces(nxf, nyf, dxf, dyf, dtf);
        mesh
    }

    fn element_rect(&self, e: usize, along: [u32; 2]) -> FaceRect {
        let [a, b] = self.elements[e].slab.fine_range(self.levels.time);
        FaceRect::new((along[0], along[1]), (a, b))
    }

    fn build_subfaces(&mut self, nxf: u32, nyf: u32, dxf: f64, dyf: f64, dtf: f64) {
        let ls = self.levels.space;
        let thickness = self.grid.thickness;
        let mut faces: Vec<SubFace> = Vec::new();
        let mut push = |orientation: Orientation, left: Option<usize>, right: Option<usize>, position: u32, rect: FaceRect| {
            let unit = match orientation {
                Orientation::X => dyf,
                Orientation::Y => dxf,
            };
            let length = (rect.along.1 - rect.along.0) as f64 * unit;
            let duration = (rect.time.1 - rect.time.0) as f64 * dtf;
            faces.push(SubFace {
                id: faces.len(),
                orientation,
                left,
                right,
                position,
                rect,
                length,
                area: length * thickness,
                duration,
                measure: length * thickness * duration,
            });
        };

        for c in 0..self.columns.len() {
            let col = &self.columns[c];
            let ([x0, x1], [y0, y1]) = col.cell.fine_range(ls);
            let elems = col.elements.clone();
            if x0 == 0 {
                for e in elems.clone() {
                    push(Orientation::X, None, Some(e), 0, self.element_rect(e, [y0, y1]));
                }
            }
            if y0 == 0 {
                for e in elems.clone() {
                    push(Orientation::Y, None, Some(e), 0, self.element_rect(e, [x0, x1]));
                }
            }
            // east and north interfaces are owned by this column
            for orientation in [Orientation::X, Orientation::Y] {
                let (at_boundary, pos, span) = match orientation {
                    Orientation::X => (x1 == nxf, x1, [y0, y1]),
                    Orientation::Y => (y1 == nyf, y1, [x0, x1]),
                };
                if at_boundary {
                    for e in elems.clone() {
                        push(orientation, Some(e), None, pos, self.element_rect(e, span));
                    }
                    continue;
                }
                for (nb, a, b) in self.neighbor_runs(orientation, pos, span, nxf) {
                    let mine: Vec<FaceRect> = elems.clone().map(|e| self.element_rect(e, [a, b])).collect();
                    let other_elems = self.columns[nb].elements.clone();
                    let theirs: Vec<FaceRect> = other_elems.clone().map(|e| self.element_rect(e, [a, b])).collect();
                    let pieces = interface_mosaic(&mine, &theirs).expect("adjacent columns tile the same interface");
                    for (ia, ib, rect) in pieces {
                        push(orientation, Some(elems.start + ia), Some(other_elems.start + ib), pos, rect);
                    }
                }
            }
        }

        let mut counts = vec![0usize; self.elements.len() + 1];
        for f in &faces {
            for e in [f.left, f.right].into_iter().flatten() {
                counts[e + 1] += 1;
            }
        }
        for i in 0..self.elements.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut refs = vec![
            FaceRef {
                subface: 0,
                side: Side::West,
                sign: 0.0
            };
            counts[self.elements.len()]
        ];
        for f in &faces {
            let (lo_side, hi_side) = match f.orientation {
                Orientation::X => (Side::East, Side::West),
                Orientation::Y => (Side::North, Side::South),
            };
            if let Some(l) = f.left {
                refs[fill[l]] = FaceRef { subface: f.id, side: lo_side, sign: 1.0 };
                fill[l] += 1;
            }
            if let Some(r) = f.right {
                refs[fill[r]] = FaceRef { subface: f.id, side: hi_side, sign: -1.0 };
                fill[r] += 1;
            }
        }
        self.subfaces = faces;
        self.face_offsets = counts;
        self.face_refs = refs;
    }

    /// Runs of neighbouring columns across the line `pos` (x = pos for
    /// `Orientation::X`, y = pos for `Orientation::Y`) over `span`.
    fn neighbor_runs(&self, orientation: Orientation, pos: u32, span: [u32; 2], nxf: u32) -> Vec<(usize, u32, u32)> {
        let mut runs: Vec<(usize, u32, u32)> = Vec::new();
        for s in span[0]..span[1] {
            let idx = match orientation {
                Orientation::X => s * nxf + pos,
                Orientation::Y => pos * nxf + s,
            };
            let nb = self.fine_lookup[idx as usize] as usize;
            match runs.last_mut() {
                Some(run) if run.0 == nb => run.2 = s + 1,
                _ => runs.push((nb, s, s + 1)),
            }
        }
        runs
    }

    pub fn grid(&self) -> &CoarseGrid {
        &self.grid
    }

    pub fn levels(&self) -> MeshLevels {
        self.levels
    }

    pub fn step(&self) -> usize {
        self.grid.step
    }

    pub fn tree(&self) -> &RefinementTree {
        &self.tree
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &Element {
        &self.elements[e]
    }

    pub fn subfaces(&self) -> &[SubFace] {
        &self.subfaces
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn faces_of(&self, e: usize) -> &[FaceRef] {
        &self.face_refs[self.face_offsets[e]..self.face_offsets[e + 1]]
    }

    /// Preceding element in the same column, if any.
    pub fn prev_in_column(&self, e: usize) -> Option<usize> {
        let c = &self.columns[self.elements[e].column];
        (e > c.elements.start).then(|| e - 1)
    }

    /// Last (end-of-step) element of each column.
    pub fn last_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().map(|c| c.elements.end - 1)
    }

    /// Finest grid dimensions `(nx, ny)`.
    pub fn fine_dims(&self) -> (usize, usize) {
        (self.grid.nx << self.levels.space, self.grid.ny << self.levels.space)
    }

    /// Column covering finest cell `(x, y)`.
    pub fn column_at(&self, x: u32, y: u32) -> usize {
        let nxf = (self.grid.nx as u32) << self.levels.space;
        self.fine_lookup[(y * nxf + x) as usize] as usize
    }

    /// Element of column `col` whose slab contains finest time unit `t`.
    pub fn element_at_time(&self, col: usize, t: u32) -> usize {
        let lt = self.levels.time;
        let range = self.columns[col].elements.clone();
        range
            .clone()
            .find(|&e| {
                let [a, b] = self.elements[e].slab.fine_range(lt);
                a <= t && t < b
            })
            .unwrap_or(range.end - 1)
    }

    /// `(level_s, level_t, cell, slab)` per element: the leaf set.
    pub fn leaf_signature(&self) -> Vec<(SpatialCell, TimeSlab)> {
        self.elements.iter().map(|e| (e.cell, e.slab)).collect()
    }

    /// Splits the time slab of every marked element in half.
    pub fn refine_temporal(&self, marked: &BTreeSet<usize>) -> Result<Self> {
        let mut tree = self.tree.clone();
        for &e in marked {
            let el = self.elements.get(e).ok_or_else(|| Error::InvalidGrid(format!("no element {e}")))?;
            if el.slab.level >= self.levels.time {
                return Err(Error::LevelCap {
                    element: e,
                    dimension: "temporal",
                    max: self.levels.time,
                });
            }
            tree.split_time(el.time_node);
        }
        Ok(Self::from_tree(self.grid, self.levels, tree))
    }

    /// Splits the spatial cell (whole column) of every marked element 4-way.
    pub fn refine_spatial(&self, marked: &BTreeSet<usize>) -> Result<Self> {
        let mut tree = self.tree.clone();
        let mut cols = BTreeSet::new();
        for &e in marked {
            let el = self.elements.get(e).ok_or_else(|| Error::InvalidGrid(format!("no element {e}")))?;
            if el.cell.level >= self.levels.space {
                return Err(Error::LevelCap {
                    element: e,
                    dimension: "spatial",
                    max: self.levels.space,
                });
            }
            cols.insert(el.column);
        }
        for c in cols {
            tree.split_space(self.columns[c].node);
        }
        Ok(Self::from_tree(self.grid, self.levels, tree))
    }

    /// Enforces the 2:1 rule between spatially adjacent leaves, in space and
    /// in time, by refining the coarser side until a fixed point.
    pub fn smooth(&self) -> Self {
        let mut mesh = self.clone();
        loop {
            let mut space = BTreeSet::new();
            let mut time = BTreeSet::new();
            for f in &mesh.subfaces {
                let Some((l, r)) = f.pair() else { continue };
                let (el, er) = (&mesh.elements[l], &mesh.elements[r]);
                if el.cell.level + 1 < er.cell.level {
                    space.insert(mesh.columns[el.column].node);
                } else if er.cell.level + 1 < el.cell.level {
                    space.insert(mesh.columns[er.column].node);
                }
                if el.slab.level + 1 < er.slab.level {
                    time.insert(el.time_node);
                } else if er.slab.level + 1 < el.slab.level {
                    time.insert(er.time_node);
                }
            }
            if space.is_empty() && time.is_empty() {
                return mesh;
            }
            let mut tree = mesh.tree.clone();
            if !space.is_empty() {
                // time node ids of split columns go stale; redo time next round
                for n in space {
                    tree.split_space(n);
                }
            } else {
                for t in time {
                    tree.split_time(t);
                }
            }
            mesh = Self::from_tree(mesh.grid, mesh.levels, tree);
        }
    }

    /// Total space-time measure of the leaves, ft³·day.
    pub fn total_measure(&self) -> f64 {
        self.elements.iter().map(|e| e.volume * e.duration).sum()
    }

    /// Measure of the whole `J_n × Ω`.
    pub fn domain_measure(&self) -> f64 {
        let g = &self.grid;
        (g.nx as f64 * g.dx) * (g.ny as f64 * g.dy) * g.thickness * g.dt
    }

    pub fn max_level_s(&self) -> u8 {
        self.elements.iter().map(|e| e.cell.level).max().unwrap_or(0)
    }

    pub fn max_level_t(&self) -> u8 {
        self.elements.iter().map(|e| e.slab.level).max().unwrap_or(0)
    }

    pub fn num_interior_subfaces(&self) -> usize {
        self.subfaces.iter().filter(|f| f.is_interior()).count()
    }
}
