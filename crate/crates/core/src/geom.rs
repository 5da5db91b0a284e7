//! 3D index geometry: volume dimensions and axis-aligned patch boxes.
//!
//! All volumes use C-order layout with z slowest: the flat index of
//! voxel (z, y, x) is `(z * H + y) * W + x`.

use serde::{Deserialize, Serialize};

/// Volume dimensions (depth, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims3 {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims3 {
    pub fn new(d: usize, h: usize, w: usize) -> Self {
        Dims3 { d, h, w }
    }

    pub fn voxel_count(&self) -> usize {
        self.d * self.h * self.w
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        debug_assert!(z < self.d && y < self.h && x < self.w);
        (z * self.h + y) * self.w + x
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.d, self.h, self.w]
    }
}

impl From<[usize; 3]> for Dims3 {
    fn from(a: [usize; 3]) -> Self {
        Dims3::new(a[0], a[1], a[2])
    }
}

/// Axis-aligned 3D box identifying a query patch: origin (z, y, x) and
/// size (d, h, w). Half-open on every axis: the box covers
/// `origin[k] .. origin[k] + size[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchBox {
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

impl PatchBox {
    pub fn new(origin: [usize; 3], size: [usize; 3]) -> Self {
        debug_assert!(size.iter().all(|&s| s > 0));
        PatchBox { origin, size }
    }

    pub fn voxel_count(&self) -> usize {
        self.size[0] * self.size[1] * self.size[2]
    }

    /// True iff the box lies fully inside a volume of the given dims.
    pub fn fits(&self, dims: Dims3) -> bool {
        let d = dims.as_array();
        (0..3).all(|k| self.origin[k] + self.size[k] <= d[k])
    }

    /// Number of voxels shared with another box.
    pub fn intersection_voxels(&self, other: &PatchBox) -> usize {
        let mut v = 1usize;
        for k in 0..3 {
            let lo = self.origin[k].max(other.origin[k]);
            let hi = (self.origin[k] + self.size[k]).min(other.origin[k] + other.size[k]);
            if hi <= lo {
                return 0;
            }
            v *= hi - lo;
        }
        v
    }

    /// Invoke `f` with the flat index of every voxel in the box.
    #[inline]
    pub fn for_each_index(&self, dims: Dims3, mut f: impl FnMut(usize)) {
        debug_assert!(self.fits(dims));
        for z in self.origin[0]..self.origin[0] + self.size[0] {
            for y in self.origin[1]..self.origin[1] + self.size[1] {
                let row = (z * dims.h + y) * dims.w + self.origin[2];
                for i in row..row + self.size[2] {
                    f(i);
                }
            }
        }
    }
}
