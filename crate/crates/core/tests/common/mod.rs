#![allow(dead_code)]

use covdetect::hermitian::{HermitianMatrix, C64};
use covdetect::likelihood::RegularizedCov;
use covdetect::onering::{ChangePoint, ChannelSample, LinkBudget, OneRingParams, Scenario};
use nalgebra::DMatrix;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    (0..dim).map(|_| complex_normal(rng)).collect()
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    let g = random_matrix(dim, dim, rng);
    HermitianMatrix::from_matrix((&g + g.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

/// `G Gᴴ / dim + shift·I`, well conditioned for moderate shifts.
pub fn random_pd<R: Rng + ?Sized>(dim: usize, shift: f64, rng: &mut R) -> HermitianMatrix {
    let g = random_matrix(dim, dim, rng);
    let m = &g * g.adjoint() / C64::new(dim as f64, 0.0);
    HermitianMatrix::from_matrix(m).unwrap().add_identity(shift)
}

pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    random_matrix(dim, dim, rng).qr().q()
}

pub fn law(c: HermitianMatrix, reg: f64) -> RegularizedCov {
    RegularizedCov::new(c, reg).unwrap()
}

pub fn samples<R: Rng + ?Sized>(c: &RegularizedCov, n: usize, rng: &mut R) -> Vec<ChannelSample> {
    (0..n).map(|_| c.sample(rng)).collect()
}

/// Entrywise sample covariance, accumulated independently of the library.
pub fn naive_covariance(xs: &[ChannelSample]) -> DMatrix<C64> {
    let m = xs[0].dim();
    let mut acc = DMatrix::zeros(m, m);
    for h in xs {
        for r in 0..m {
            for c in 0..m {
                acc[(r, c)] += h.0[r] * h.0[c].conj();
            }
        }
    }
    acc / C64::new(xs.len() as f64, 0.0)
}

pub fn frob(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn general_params(aod_deg: f64) -> OneRingParams {
    OneRingParams {
        tx_antennas: 8,
        rx_antennas: 2,
        aod_deg,
        spread_deg: 30.0,
        wavelength_m: 0.15,
        quadrature_nodes: 1024,
    }
}

pub fn general_link() -> LinkBudget {
    LinkBudget {
        tx_power_dbm: 23.0,
        distance_km: 0.1,
        bandwidth_hz: 10e6,
        noise_psd_dbm_hz: -169.0,
        pilot_len: 8,
    }
}

pub fn general_scenario(delta: f64, change_point: ChangePoint, horizon: usize) -> Scenario {
    Scenario {
        params_pre: general_params(0.0),
        delta_aod_deg: delta,
        link: general_link(),
        change_point,
        horizon,
        seed: 1,
    }
}

/// Two-sample z statistic for the difference of means.
pub fn two_sample_z(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    (ma - mb) / (va / a.len() as f64 + vb / b.len() as f64).sqrt()
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
