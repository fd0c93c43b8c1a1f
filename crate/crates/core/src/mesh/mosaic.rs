//! Trace intersection on space-time interfaces.

use crate::error::{Error, Result};

/// Axis-aligned rectangle on an interface, in integer finest units: an
/// interval along the face line times a time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaceRect {
    pub along: (u32, u32),
    pub time: (u32, u32),
}

impl FaceRect {
    pub fn new(along: (u32, u32), time: (u32, u32)) -> Self {
        Self { along, time }
    }

    pub fn measure(&self) -> u64 {
        (self.along.1 - self.along.0) as u64 * (self.time.1 - self.time.0) as u64
    }

    pub fn intersect(&self, other: &FaceRect) -> Option<FaceRect> {
        let a = (self.along.0.max(other.along.0), self.along.1.min(other.along.1));
        let t = (self.time.0.max(other.time.0), self.time.1.min(other.time.1));
        (a.0 < a.1 && t.0 < t.1).then_some(FaceRect { along: a, time: t })
    }

    pub fn contains(&self, other: &FaceRect) -> bool {
        self.along.0 <= other.along.0
            && other.along.1 <= self.along.1
            && self.time.0 <= other.time.0
            && other.time.1 <= self.time.1
    }
}

fn bbox(rects: &[FaceRect]) -> Option<FaceRect> {
    let first = rects.first()?;
    Some(rects.iter().fold(*first, |acc, r| FaceRect {
        along: (acc.along.0.min(r.along.0), acc.along.1.max(r.along.1)),
        time: (acc.time.0.min(r.time.0), acc.time.1.max(r.time.1)),
    }))
}

fn check_tiling(rects: &[FaceRect], name: &str) -> Result<FaceRect> {
    let b = bbox(rects).ok_or_else(|| Error::NonCoincidentFaces(format!("{name} side is empty")))?;
    if rects.iter().any(|r| r.measure() == 0) {
        return Err(Error::NonCoincidentFaces(format!("{name} side has a degenerate face")));
    }
    let total: u64 = rects.iter().map(FaceRect::measure).sum();
    if total != b.measure() {
        return Err(Error::NonCoincidentFaces(format!(
            "{name} side does not tile its bounding rectangle"
        )));
    }
    Ok(b)
}

/// Intersects the traces of the two sides of an interface.
///
/// Each side is given as the set of element faces touching the interface.
/// Returns `(index_in_a, index_in_b, piece)` for every non-empty
/// intersection; the pieces partition the interface exactly.
pub fn interface_mosaic(side_a: &[FaceRect], side_b: &[FaceRect]) -> Result<Vec<(usize, usize, FaceRect)>> {
    let ba = check_tiling(side_a, "first")?;
    let bb = check_tiling(side_b, "second")?;
    if ba != bb {
        return Err(Error::NonCoincidentFaces(format!("{ba:?} vs {bb:?}")));
    }
    let mut out = Vec::new();
    for (ia, a) in side_a.iter().enumerate() {
        for (ib, b) in side_b.iter().enumerate() {
            if let Some(piece) = a.intersect(b) {
                out.push((ia, ib, piece));
            }
        }
    }
    Ok(out)
}
