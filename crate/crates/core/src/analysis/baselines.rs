//! Analytical noise baselines and the rigid per-region fixture.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{InnerRegion, LandmarkSequence, Point, TemporalArtifact};

/// Largest diagonal jitter tried when factoring a semi-definite covariance.
pub const MAX_JITTER: f64 = 1e-10;

fn selection_mask(n: usize, regions: &[InnerRegion]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for r in regions {
        for i in r.indices() {
            if i < n {
                mask[i] = true;
            }
        }
    }
    mask
}

/// Adds independent N(0, sigma^2) noise to both coordinates of every selected
/// landmark in every frame.
pub fn iid_noise_baseline(
    seq: &LandmarkSequence,
    sigma: f64,
    regions: &[InnerRegion],
    rng: &mut ChaCha8Rng,
) -> Result<LandmarkSequence> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be finite and non-negative"));
    }
    if sigma == 0.0 {
        return Ok(seq.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mask = selection_mask(seq.num_points(), regions);
    Ok(seq.map_points(|_, j, p| {
        if mask[j] {
            [p[0] + normal.sample(rng), p[1] + normal.sample(rng)]
        } else {
            p
        }
    }))
}

/// Lower Cholesky factor of a symmetric PSD matrix, adding the smallest
/// diagonal jitter (up to [`MAX_JITTER`]) needed for the factorization.
pub fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(Error::invalid("covariance must be square and non-empty"));
    }
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid("covariance is not symmetric"));
            }
        }
    }
    for jitter in [0.0, 1e-14, 1e-12, MAX_JITTER] {
        let m = cov + DMatrix::identity(n, n) * jitter;
        if let Some(c) = m.cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::invalid("covariance is not positive semi-definite"))
}

/// Adds per-frame correlated Gaussian noise with covariance `cov` over the
/// flattened `[x0, y0, x1, y1, ...]` layout, keeping only the entries of
/// selected landmarks. A full draw is made every frame regardless of the
/// selection so that the random stream does not depend on it.
pub fn multivariate_noise_baseline(
    seq: &LandmarkSequence,
    cov: &DMatrix<f64>,
    regions: &[InnerRegion],
    rng: &mut ChaCha8Rng,
) -> Result<LandmarkSequence> {
    let n = seq.num_points();
    if cov.nrows() != 2 * n {
        return Err(Error::invalid(format!(
            "covariance is {}x{}, expected {}x{}",
            cov.nrows(),
            cov.ncols(),
            2 * n,
            2 * n
        )));
    }
    let l = cholesky_factor(cov)?;
    let mask = selection_mask(n, regions);
    let mut out = seq.clone();
    for t in 0..seq.len() {
        let z = DVector::from_iterator(2 * n, (0..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise = &l * z;
        for (j, p) in out.frame_mut(t).iter_mut().enumerate() {
            if mask[j] {
                p[0] += noise[2 * j];
                p[1] += noise[2 * j + 1];
            }
        }
    }
    Ok(out)
}

/// Sample covariance of artifact steps in the `[x0, y0, ...]` layout, halved:
/// per-frame noise with this covariance produces steps whose covariance
/// matches the input, because each step differences two independent draws.
pub fn estimate_artifact_covariance(artifacts: &[TemporalArtifact]) -> Result<DMatrix<f64>> {
    let n = artifacts.first().ok_or_else(|| Error::invalid("no artifacts"))?.num_points();
    let rows: Vec<&[Point]> = artifacts
        .iter()
        .map(|a| {
            if a.num_points() == n {
                Ok(a)
            } else {
                Err(Error::SequenceMismatch("artifact landmark counts differ".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|a| (0..a.num_steps()).map(move |s| a.step(s)))
        .collect();
    let m = rows.len();
    if m < 2 {
        return Err(Error::invalid("need at least 2 artifact steps"));
    }
    let data = DMatrix::from_fn(m, 2 * n, |r, c| rows[r][c / 2][c % 2]);
    let mean = data.row_mean();
    let centered = DMatrix::from_fn(m, 2 * n, |r, c| data[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / ((m - 1) as f64);
    Ok((&cov + cov.transpose()) * 0.25)
}

/// Applies an independent random affine to each selected face region in
/// every frame, about the region's centroid in that frame. Matrix entries
/// deviate from identity by N(0, amplitude^2) and the translation is
/// N(0, amplitude^2) per axis.
pub fn rigid_region_fixture(
    seq: &LandmarkSequence,
    amplitude: f64,
    regions: &[InnerRegion],
    rng: &mut ChaCha8Rng,
) -> Result<LandmarkSequence> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude must be finite and non-negative"));
    }
    let mut out = seq.clone();
    if amplitude == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, amplitude).map_err(|e| Error::invalid(e.to_string()))?;
    for t in 0..seq.len() {
        for group in regions {
            for region in group.regions() {
                let idx: Vec<usize> = region.indices().filter(|&i| i < seq.num_points()).collect();
                if idx.is_empty() {
                    continue;
                }
                let frame = out.frame_mut(t);
                let c = idx.iter().fold([0.0, 0.0], |a, &i| [a[0] + frame[i][0], a[1] + frame[i][1]]);
                let c = [c[0] / idx.len() as f64, c[1] / idx.len() as f64];
                let a = [
                    [1.0 + normal.sample(rng), normal.sample(rng)],
                    [normal.sample(rng), 1.0 + normal.sample(rng)],
                ];
                let tr = [normal.sample(rng), normal.sample(rng)];
                for &i in &idx {
                    let d = [frame[i][0] - c[0], frame[i][1] - c[1]];
                    frame[i] = [
                        c[0] + a[0][0] * d[0] + a[0][1] * d[1] + tr[0],
                        c[1] + a[1][0] * d[0] + a[1][1] * d[1] + tr[1],
                    ];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{temporal_artifacts, LandmarkScheme};
    use rand::SeedableRng;

    fn still(t: usize) -> LandmarkSequence {
        let frame: Vec<Point> = (0..68).map(|j| [0.3 + 0.005 * j as f64, 0.5 - 0.003 * j as f64]).collect();
        LandmarkSequence::constant(LandmarkScheme::Multipie68, &frame, t).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity_and_unselected_untouched() {
        let s = still(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(iid_noise_baseline(&s, 0.0, &InnerRegion::ALL, &mut rng).unwrap(), s);
        let noisy = iid_noise_baseline(&s, 0.01, &[InnerRegion::Mouth], &mut rng).unwrap();
        for t in 0..5 {
            for j in 0..68 {
                assert_eq!(noisy.point(t, j) == s.point(t, j), !(48..68).contains(&j));
            }
        }
    }

    #[test]
    fn cholesky_handles_rank_one_and_rejects_indefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let l = cholesky_factor(&(&v * v.transpose())).unwrap();
        assert!(((&l * l.transpose()) - &v * v.transpose()).amax() < 1e-8);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky_factor(&bad).unwrap_err().kind(), "invalid-input");
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        assert!(cholesky_factor(&asym).is_err());
    }

    #[test]
    fn estimated_covariance_halves_step_covariance() {
        let s = still(4001);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = iid_noise_baseline(&s, 0.01, &[InnerRegion::Nose], &mut rng).unwrap();
        let art = temporal_artifacts(&noisy, &s).unwrap();
        let cov = estimate_artifact_covariance(&[art]).unwrap();
        let j = 2 * 30;
        assert!((cov[(j, j)] / 1e-4 - 1.0).abs() < 0.1, "{}", cov[(j, j)]);
        assert!(cov[(0, 0)].abs() < 1e-20);
    }

    #[test]
    fn rigid_fixture_moves_only_selected_regions() {
        let s = still(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = rigid_region_fixture(&s, 0.01, &[InnerRegion::Eyes], &mut rng).unwrap();
        for j in 0..68 {
            let moved = r.point(1, j) != s.point(1, j);
            assert_eq!(moved, (36..48).contains(&j), "landmark {j}");
        }
    }
}
