//! Homographies between successive frames and the stacked one-second
//! motion feature built from them.

use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use crate::error::{Error, Result};

/// Smallest accepted |det| for homographies and intrinsics.
const SINGULAR_EPS: f64 = 1e-12;
/// Singular value ratio below which the DLT system is considered rank deficient.
const RANK_EPS: f64 = 1e-10;

/// A 3×3 homography scaled so that its top-left entry is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rescales `m` by its top-left entry.
    pub fn normalize(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularMatrix("non-finite homography"));
        }
        if m[(0, 0)] == 1.0 {
            if m.determinant().abs() <= SINGULAR_EPS {
                return Err(Error::SingularMatrix("homography"));
            }
            return Ok(Self(*m));
        }
        let frob = m.norm();
        if !(frob > 0.0) {
            return Err(Error::SingularMatrix("zero homography"));
        }
        let scaled = m / frob;
        let h00 = scaled[(0, 0)];
        if h00.abs() < SINGULAR_EPS {
            return Err(Error::NormalizationFailure(h00));
        }
        let h = scaled / h00;
        if h.determinant().abs() <= SINGULAR_EPS {
            return Err(Error::SingularMatrix("homography"));
        }
        let mut h = h;
        h[(0, 0)] = 1.0;
        Ok(Self(h))
    }

    /// Reads a row-major 9-vector, normalizing the top-left entry.
    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::DimMismatch {
                expected: 9,
                actual: values.len(),
            });
        }
        Self::normalize(&Matrix3::from_row_slice(values))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        std::array::from_fn(|k| self.0[(k / 3, k % 3)])
    }

    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }
}

/// Pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::SingularMatrix("intrinsics need positive focal lengths"));
        }
        Self::from_matrix(Matrix3::new(fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    /// Accepts any invertible matrix; `new` enforces the upper-triangular form.
    pub fn from_matrix(k: Matrix3<f64>) -> Result<Self> {
        if !k.iter().all(|v| v.is_finite()) || k.determinant().abs() <= SINGULAR_EPS {
            return Err(Error::SingularMatrix("intrinsics"));
        }
        let k_inv = k
            .try_inverse()
            .ok_or(Error::SingularMatrix("intrinsics"))?;
        Ok(Self { k, k_inv })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.k_inv
    }
}

/// Translates points to their centroid and scales them to mean distance √2.
fn hartley_normalize(pts: &[Point2<f64>]) -> (Vec<Point2<f64>>, Matrix3<f64>) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts
        .iter()
        .map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    (out, t)
}

/// Least-squares DLT estimate of the homography mapping `src` onto `dst`.
pub fn estimate_homography(src: &[Point2<f64>], dst: &[Point2<f64>]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            what: "correspondences",
            expected: src.len(),
            actual: dst.len(),
        });
    }
    if src.len() < 4 {
        return Err(Error::InsufficientPoints(src.len()));
    }
    if src.iter().chain(dst).any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::DegenerateConfiguration(0.0));
    }

    let (s, ts) = hartley_normalize(src);
    let (d, td) = hartley_normalize(dst);

    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * s.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, q)) in s.iter().zip(&d).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(Error::SingularMatrix("SVD did not converge"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    let eighth = sv[order[7]];
    let ratio = if largest > 0.0 { eighth / largest } else { 0.0 };
    if ratio < RANK_EPS {
        return Err(Error::DegenerateConfiguration(ratio));
    }
    let null = v_t.row(order[8]);
    let hn = Matrix3::from_row_slice(&[
        null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8],
    ]);
    let td_inv = td
        .try_inverse()
        .ok_or(Error::SingularMatrix("normalization transform"))?;
    Homography::normalize(&(td_inv * hn * ts))
}

/// Matched image points from frame `n` (`src`) to frame `n + 1` (`dst`).
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub src: Vec<Point2<f64>>,
    pub dst: Vec<Point2<f64>>,
}

impl Correspondences {
    pub fn estimate(&self) -> Result<Homography> {
        estimate_homography(&self.src, &self.dst)
    }
}

/// Approximate camera rotation `K⁻¹ H K`, scaled to unit determinant.
pub fn rotation_from_homography(h: &Homography, k: &CameraIntrinsics) -> Result<Matrix3<f64>> {
    if h.matrix().determinant().abs() <= SINGULAR_EPS {
        return Err(Error::SingularMatrix("homography"));
    }
    let r = k.inverse() * h.matrix() * k.matrix();
    let det = r.determinant();
    if det.abs() <= SINGULAR_EPS || !det.is_finite() {
        return Err(Error::SingularMatrix("K⁻¹HK"));
    }
    Ok(r / det.cbrt())
}

/// Flattened stack of consecutive per-frame homographies around a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub center_frame: usize,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Frames covered by a window centred on `center`, as `(first, last)`.
pub fn window_bounds(center: usize, window: usize) -> (i64, i64) {
    let back = ((window - 1) / 2) as i64;
    let fwd = (window - 1 - (window - 1) / 2) as i64;
    (center as i64 - back, center as i64 + fwd)
}

/// Concatenates the `window - 1` homographies spanning the window around
/// `center`; `hs[i]` maps frame `i` to frame `i + 1`.
pub fn feature_window(hs: &[Homography], center: usize, window: usize) -> Result<FeatureVector> {
    if window < 2 {
        return Err(Error::InvalidParameter(format!(
            "feature window must be at least 2, got {window}"
        )));
    }
    let (start, end) = window_bounds(center, window);
    if start < 0 || end > hs.len() as i64 {
        return Err(Error::OutOfRange {
            start,
            end,
            len: hs.len() + 1,
        });
    }
    let values = hs[start as usize..end as usize]
        .iter()
        .flat_map(|h| h.to_row_array())
        .collect();
    Ok(FeatureVector {
        values,
        center_frame: center,
    })
}

/// Centres for which `feature_window` succeeds on a sequence of `n_frames`.
pub fn valid_centers(n_frames: usize, window: usize) -> std::ops::Range<usize> {
    let back = (window - 1) / 2;
    let fwd = window - 1 - back;
    if n_frames < window {
        return 0..0;
    }
    back..n_frames - fwd
}
