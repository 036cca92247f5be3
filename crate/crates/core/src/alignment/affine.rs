use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Least-squares affine map from latent onto tenprint correspondences.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    /// Homogeneous 3x3 matrix; the third row is always `(0, 0, 1)`.
    pub matrix: Matrix3<f64>,
    /// Fixed anchor translation added after `matrix`.
    pub tau: [f64; 2],
    /// Mean squared residual over the correspondences, in px².
    pub error: f64,
}

impl AffineFit {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let a = &self.matrix;
        [
            a[(0, 0)] * p[0] + a[(0, 1)] * p[1] + a[(0, 2)] + self.tau[0],
            a[(1, 0)] * p[0] + a[(1, 1)] * p[1] + a[(1, 2)] + self.tau[1],
        ]
    }

    /// Upper-left 2x2 block, row-major.
    pub fn linear_part(&self) -> [[f64; 2]; 2] {
        let a = &self.matrix;
        [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]]
    }
}

/// Ratio of smallest to largest scatter eigenvalue below which the latent
/// points are treated as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

/// Solves `tenprint ≈ A · latent + tau` for the six free entries of `A`.
///
/// The two output rows share the design `[x y 1]` and decouple into two
/// three-parameter problems. Each is solved from the centred normal
/// equations, which keeps the 2x2 scatter matrix well conditioned for
/// pixel-scale coordinates.
pub fn fit_affine(
    latent: &[[f64; 2]],
    tenprint: &[[f64; 2]],
    tau: [f64; 2],
    min_correspondences: usize,
) -> Result<AffineFit> {
    if latent.len() != tenprint.len() {
        return Err(Error::InvalidInput(format!(
            "correspondence lists differ in length ({} vs {})",
            latent.len(),
            tenprint.len()
        )));
    }
    let n = latent.len();
    if n < min_correspondences.max(3) {
        return Err(Error::InsufficientCorrespondence {
            found: n,
            required: min_correspondences.max(3),
        });
    }
    let nf = n as f64;
    let mean = |pts: &[[f64; 2]], k: usize| pts.iter().map(|p| p[k]).sum::<f64>() / nf;
    let (lx, ly) = (mean(latent, 0), mean(latent, 1));
    let targets = |k: usize| -> Vec<f64> { tenprint.iter().map(|m| m[k] - tau[k]).collect() };
    let tx = targets(0);
    let ty = targets(1);
    let (mtx, mty) = (tx.iter().sum::<f64>() / nf, ty.iter().sum::<f64>() / nf);

    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut bx, mut by) = ([0.0; 2], [0.0; 2]);
    for (i, p) in latent.iter().enumerate() {
        let (dx, dy) = (p[0] - lx, p[1] - ly);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        let (ex, ey) = (tx[i] - mtx, ty[i] - mty);
        bx[0] += dx * ex;
        bx[1] += dy * ex;
        by[0] += dx * ey;
        by[1] += dy * ey;
    }

    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let lambda_max = 0.5 * (trace + disc);
    let lambda_min = if lambda_max > 0.0 { det / lambda_max } else { 0.0 };
    if lambda_max.is_nan() || lambda_max <= 0.0 || lambda_min <= COLLINEAR_RATIO * lambda_max {
        return Err(Error::DegenerateGeometry(format!(
            "{n} latent correspondences are collinear or coincident"
        )));
    }

    let solve = |b: [f64; 2]| [(syy * b[0] - sxy * b[1]) / det, (sxx * b[1] - sxy * b[0]) / det];
    let [a11, a12] = solve(bx);
    let [a21, a22] = solve(by);
    let a13 = mtx - a11 * lx - a12 * ly;
    let a23 = mty - a21 * lx - a22 * ly;

    let matrix = Matrix3::new(a11, a12, a13, a21, a22, a23, 0.0, 0.0, 1.0);
    let mut fit = AffineFit {
        matrix,
        tau,
        error: 0.0,
    };
    let sse: f64 = latent
        .iter()
        .zip(tenprint)
        .map(|(l, m)| {
            let p = fit.apply(*l);
            (m[0] - p[0]).powi(2) + (m[1] - p[1]).powi(2)
        })
        .sum();
    fit.error = sse / nf;
    Ok(fit)
}
