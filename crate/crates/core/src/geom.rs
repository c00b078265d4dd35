use std::fmt;

/// Address of a range-image cell: laser row and global (unwrapped) column.
///
/// Ordering is column-major so that sorted sets of roots iterate oldest column first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub col: i64,
    pub row: u32,
}

impl CellIndex {
    pub fn new(row: u32, col: i64) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(row {}, col {})", self.row, self.col)
    }
}

pub type Rotation = [[f64; 3]; 3];

pub const IDENTITY: Rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn rotate(r: &Rotation, v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

pub fn transpose(r: &Rotation) -> Rotation {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in r.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

/// Yaw rotation about +z (counter-clockwise, radians).
pub fn rot_z(yaw: f64) -> Rotation {
    let (s, c) = yaw.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Maximum absolute deviation of `R·Rᵀ` from the identity.
pub fn orthonormality_error(r: &Rotation) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - expected).abs());
        }
    }
    worst
}

pub fn dist_sq(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

/// The single linkage predicate `‖a − b‖ < d_T` shared by the streaming
/// clusterer and the batch oracle, so both sides agree bit-for-bit at the boundary.
#[inline]
pub fn linked(a: [f32; 3], b: [f32; 3], d_t: f64) -> bool {
    dist_sq(a, b) < d_t * d_t
}

pub fn horizontal_radius(p: [f32; 3]) -> f64 {
    (p[0] as f64).hypot(p[1] as f64)
}
