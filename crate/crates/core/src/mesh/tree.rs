//! Append-only refinement tree.
//!
//! Each coarse cell roots a quadtree of spatial nodes; every spatial node
//! owns a binary tree of time slabs over the coarse step. Nodes are only
//! ever added. Splitting a spatial node copies its time subdivision into
//! the four children.

use super::{SpatialCell, TimeSlab};

pub type NodeId = u32;
pub type TimeNodeId = u32;

#[derive(Debug, Clone)]
pub struct SpatialNode {
    pub cell: SpatialCell,
    pub children: Option<[NodeId; 4]>,
    pub time_root: TimeNodeId,
}

#[derive(Debug, Clone)]
pub struct TimeNode {
    pub slab: TimeSlab,
    pub children: Option<[TimeNodeId; 2]>,
}

#[derive(Debug, Clone)]
pub struct RefinementTree {
    roots: Vec<NodeId>,
    nodes: Vec<SpatialNode>,
    time_nodes: Vec<TimeNode>,
}

impl RefinementTree {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut tree = Self {
            roots: Vec::with_capacity(nx * ny),
            nodes: Vec::with_capacity(nx * ny),
            time_nodes: Vec::with_capacity(nx * ny),
        };
        for j in 0..ny as u32 {
            for i in 0..nx as u32 {
                let t = tree.push_time(TimeSlab { level: 0, k: 0 });
                let id = tree.nodes.len() as NodeId;
                tree.nodes.push(SpatialNode {
                    cell: SpatialCell { level: 0, i, j },
                    children: None,
                    time_root: t,
                });
                tree.roots.push(id);
            }
        }
        tree
    }

    fn push_time(&mut self, slab: TimeSlab) -> TimeNodeId {
        let id = self.time_nodes.len() as TimeNodeId;
        self.time_nodes.push(TimeNode { slab, children: None });
        id
    }

    pub fn node(&self, id: NodeId) -> &SpatialNode {
        &self.nodes[id as usize]
    }

    pub fn time_node(&self, id: TimeNodeId) -> &TimeNode {
        &self.time_nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn time_node_count(&self) -> usize {
        self.time_nodes.len()
    }

    fn copy_time_subtree(&mut self, src: TimeNodeId) -> TimeNodeId {
        let slab = self.time_nodes[src as usize].slab;
        let dst = self.push_time(slab);
        if let Some([a, b]) = self.time_nodes[src as usize].children {
            let ca = self.copy_time_subtree(a);
            let cb = self.copy_time_subtree(b);
            self.time_nodes[dst as usize].children = Some([ca, cb]);
        }
        dst
    }

    /// Splits a spatial leaf 4-way. No-op on interior nodes.
    pub fn split_space(&mut self, id: NodeId) {
        let node = &self.nodes[id as usize];
        if node.children.is_some() {
            return;
        }
        let (cell, time_root) = (node.cell, node.time_root);
        let mut kids = [0; 4];
        for (slot, child) in kids.iter_mut().zip(cell.children()) {
            let t = self.copy_time_subtree(time_root);
            *slot = self.nodes.len() as NodeId;
            self.nodes.push(SpatialNode {
                cell: child,
                children: None,
                time_root: t,
            });
        }
        self.nodes[id as usize].children = Some(kids);
    }

    /// Splits a time leaf in half. No-op on interior nodes.
    pub fn split_time(&mut self, id: TimeNodeId) {
        let node = &self.time_nodes[id as usize];
        if node.children.is_some() {
            return;
        }
        let [a, b] = node.slab.children();
        let ca = self.push_time(a);
        let cb = self.push_time(b);
        self.time_nodes[id as usize].children = Some([ca, cb]);
    }

    /// Spatial leaves in deterministic order: coarse cells row-major, then
    /// depth-first in child order (SW, SE, NW, NE).
    pub fn spatial_leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for &r in &self.roots {
            stack.push(r);
            while let Some(id) = stack.pop() {
                match self.nodes[id as usize].children {
                    Some(kids) => stack.extend(kids.iter().rev()),
                    None => out.push(id),
                }
            }
        }
        out
    }

    /// Time leaves under `root` in chronological order.
    pub fn time_leaves(&self, root: TimeNodeId) -> Vec<TimeNodeId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            match self.time_nodes[id as usize].children {
                Some([a, b]) => {
                    stack.push(b);
                    stack.push(a);
                }
                None => out.push(id),
            }
        }
        out
    }
}
