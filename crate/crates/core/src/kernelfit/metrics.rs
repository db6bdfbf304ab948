//! Truncated `L_p` and maximum pointwise CF errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::CharFn;
use crate::error::{config_err, Result};

/// `L_p(f1, f2) = ∫_{[−A,A]²} |f1 − f2|^p` (no root) for the Re and Im parts,
/// plus the maximum pointwise error over the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub l1_re: f64,
    pub l2_re: f64,
    pub mpe_re: f64,
    pub l1_im: f64,
    pub l2_im: f64,
    pub mpe_im: f64,
}

impl FitMetrics {
    pub const CSV_HEADER: &'static str = "part,L1,L2,MPE";

    /// Two CSV rows, `Re` then `Im`, under [`FitMetrics::CSV_HEADER`].
    pub fn csv_rows(&self) -> String {
        format!(
            "Re,{:.6e},{:.6e},{:.6e}\nIm,{:.6e},{:.6e},{:.6e}\n",
            self.l1_re, self.l2_re, self.mpe_re, self.l1_im, self.l2_im, self.mpe_im
        )
    }
}

/// Tensor trapezoid over `[−A, A]²` with `grid_n` nodes per axis.
pub fn fit_metrics(model: &dyn CharFn, target: &dyn CharFn, half_width: f64, grid_n: usize) -> Result<FitMetrics> {
    if grid_n < 2 {
        return Err(config_err("fit_metrics needs at least 2 nodes per axis"));
    }
    if !(half_width > 0.0) {
        return Err(config_err("evaluation box must have positive half-width"));
    }
    let h = 2.0 * half_width / (grid_n - 1) as f64;
    let x = |i: usize| -half_width + i as f64 * h;
    let w = |i: usize| if i == 0 || i == grid_n - 1 { 0.5 } else { 1.0 };
    let rows: Vec<[f64; 6]> = (0..grid_n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0f64; 6];
            for j in 0..grid_n {
                let eta = [x(i), x(j)];
                let d = target.cf(eta) - model.cf(eta);
                let wt = w(i) * w(j) * h * h;
                let (re, im) = (d.re.abs(), d.im.abs());
                acc[0] += wt * re;
                acc[1] += wt * re * re;
                acc[2] = acc[2].max(re);
                acc[3] += wt * im;
                acc[4] += wt * im * im;
                acc[5] = acc[5].max(im);
            }
            acc
        })
        .collect();
    let mut t = [0.0f64; 6];
    for r in rows {
        for k in [0, 1, 3, 4] {
            t[k] += r[k];
        }
        t[2] = t[2].max(r[2]);
        t[5] = t[5].max(r[5]);
    }
    Ok(FitMetrics { l1_re: t[0], l2_re: t[1], mpe_re: t[2], l1_im: t[3], l2_im: t[4], mpe_im: t[5] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result as R;
    use crate::kernelfit::mixture::MixtureParams;
    use num_complex::Complex64;

    struct Shifted<'a>(&'a dyn CharFn, Complex64);

    impl CharFn for Shifted<'_> {
        fn dt(&self) -> f64 {
            1.0
        }
        fn cf_complex(&self, eta: [Complex64; 2]) -> R<Complex64> {
            Ok(self.0.cf_complex(eta)? + self.1)
        }
    }

    #[test]
    fn identical_functions_give_zero() {
        let g = crate::charfn::Kou2DParams::synthetic();
        let m = fit_metrics(&g, &g, 10.0, 51).unwrap();
        assert_eq!(m, FitMetrics { l1_re: 0.0, l2_re: 0.0, mpe_re: 0.0, l1_im: 0.0, l2_im: 0.0, mpe_im: 0.0 });
    }

    #[test]
    fn constant_offset_closed_form() {
        let g = MixtureParams::gaussian([0.0, 0.0], 0.3, 0.3, 0.0, 1.0);
        let d = 0.25;
        let shifted = Shifted(&g, Complex64::new(d, -2.0 * d));
        let a = 3.0;
        let m = fit_metrics(&g, &shifted, a, 41).unwrap();
        let area = (2.0 * a) * (2.0 * a);
        assert!((m.l1_re - d * area).abs() < 1e-12);
        assert!((m.l2_re - d * d * area).abs() < 1e-12);
        assert!((m.mpe_re - d).abs() < 1e-15);
        assert!((m.l1_im - 2.0 * d * area).abs() < 1e-12);
        assert!((m.mpe_im - 2.0 * d).abs() < 1e-15);
    }

    #[test]
    fn rejects_tiny_grid() {
        let g = crate::charfn::Kou2DParams::synthetic();
        assert!(fit_metrics(&g, &g, 1.0, 1).is_err());
    }
}
