//! Elementary symmetric functions of principal-curvature spectra.
//!
//! Everything here is a pure function of its arguments; the dimension `n` is
//! always taken from the [`Spectrum`] itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{binomial, factorial};

/// Principal curvatures `kappa_1..kappa_n` at a point of a hypersurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("spectrum must have n >= 1 entries".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("entry {i} is not finite")));
        }
        Ok(Self { values })
    }

    /// The isotropic spectrum `(c, ..., c)`.
    pub fn umbilic(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sigma_0, ..., sigma_n` in one pass.
    pub fn sigmas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n() + 1];
        elementary_symmetric(&self.values, &mut out);
        out
    }
}

/// Fills `out[j] = sigma_j(values)` for `j < out.len()` using the one-pass
/// recurrence `e_j <- e_j + lambda * e_{j-1}`.
///
/// Entries beyond `values.len()` are zero.
pub fn elementary_symmetric(values: &[f64], out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out.iter_mut().for_each(|e| *e = 0.0);
    out[0] = 1.0;
    let top = out.len() - 1;
    for (i, &lambda) in values.iter().enumerate() {
        for j in (1..=top.min(i + 1)).rev() {
            out[j] += lambda * out[j - 1];
        }
    }
}

/// `sigma_k` of the spectrum with entry `skip` removed.
pub(crate) fn sigma_without(values: &[f64], skip: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut buf = [0.0f64; 16];
    let mut e = vec![];
    let out: &mut [f64] = if k < buf.len() {
        &mut buf[..=k]
    } else {
        e.resize(k + 1, 0.0);
        &mut e
    };
    out[0] = 1.0;
    let mut seen = 0;
    for (i, &lambda) in values.iter().enumerate() {
        if i == skip {
            continue;
        }
        for j in (1..=k.min(seen + 1)).rev() {
            out[j] += lambda * out[j - 1];
        }
        seen += 1;
    }
    out[k]
}

/// The `k`-th elementary symmetric function; `sigma_0 = 1`.
pub fn sigma(k: usize, s: &Spectrum) -> Result<f64> {
    let n = s.n();
    if k > n {
        return Err(Error::Domain(format!("sigma_{k} requested for n = {n}")));
    }
    let mut out = vec![0.0; k + 1];
    elementary_symmetric(s.values(), &mut out);
    Ok(out[k])
}

/// `sigma_{k+1} / sigma_k`.
pub fn sigma_ratio(k: usize, s: &Spectrum) -> Result<f64> {
    let n = s.n();
    if k + 1 > n {
        return Err(Error::Domain(format!("sigma ratio index {k} needs k <= n - 1 = {}", n - 1)));
    }
    let mut out = vec![0.0; k + 2];
    elementary_symmetric(s.values(), &mut out);
    if out[k] == 0.0 {
        return Err(Error::SingularRatio { k });
    }
    Ok(out[k + 1] / out[k])
}

/// Membership in the cone `Gamma_k = { sigma_1 > 0, ..., sigma_k > 0 }`.
pub fn in_gamma_cone(k: usize, s: &Spectrum) -> Result<bool> {
    let n = s.n();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("Gamma_{k} needs 1 <= k <= n = {n}")));
    }
    let mut out = vec![0.0; k + 1];
    elementary_symmetric(s.values(), &mut out);
    Ok(out[1..].iter().all(|&v| v > 0.0))
}

/// `k (n - k) sigma_k^2 - (n - k + 1)(k + 1) sigma_{k-1} sigma_{k+1}`.
///
/// Nonnegative on `Gamma_k`, zero exactly at isotropic spectra.
pub fn newton_maclaurin_margin(k: usize, s: &Spectrum) -> Result<f64> {
    let n = s.n();
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("Newton-Maclaurin index {k} needs 1 <= k <= n - 1")));
    }
    let mut e = vec![0.0; k + 2];
    elementary_symmetric(s.values(), &mut e);
    let (kf, nf) = (k as f64, n as f64);
    Ok(kf * (nf - kf) * e[k] * e[k] - (nf - kf + 1.0) * (kf + 1.0) * e[k - 1] * e[k + 1])
}

/// `c_{n,k} = sigma_k^{(k+1)/k}(I) / sigma_{k+1}(I)`.
///
/// Defined for `1 <= k <= n - 1`; the `k = 0` flow uses its own literal
/// coefficient `n`.
pub fn c_nk(n: usize, k: usize) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("c_(n,k) needs 1 <= k <= n - 1, got n = {n}, k = {k}")));
    }
    let kf = k as f64;
    Ok(binomial(n, k).powf((kf + 1.0) / kf) / binomial(n, k + 1))
}

/// Gauss-Bonnet curvature
/// `L_k = C(n, 2k) (2k)! sum_i C(k, i) / C(n, 2k - 2i) (-1)^i sigma_{2k-2i}`.
pub fn gauss_bonnet_lk(n: usize, k: usize, s: &Spectrum) -> Result<f64> {
    if 2 * k > n {
        return Err(Error::Domain(format!("L_{k} needs 2k <= n = {n}")));
    }
    if s.n() != n {
        return Err(Error::Domain(format!("spectrum has {} entries, expected {n}", s.n())));
    }
    let sig = s.sigmas();
    let sum: f64 = (0..=k)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(k, i) / binomial(n, 2 * k - 2 * i) * sig[2 * k - 2 * i]
        })
        .sum();
    Ok(binomial(n, 2 * k) * factorial(2 * k) * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Subset enumeration; the oracle for the recurrence.
    fn sigma_brute(k: usize, v: &[f64]) -> f64 {
        let n = v.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| v[i]).product::<f64>())
            .sum()
    }

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(0, &spec(&[3.0, -2.0])).unwrap(), 1.0);
        assert_eq!(sigma(1, &spec(&[1.0, 1.0, 1.0])).unwrap(), 3.0);
        assert_eq!(sigma(2, &spec(&[1.0, 2.0, 3.0])).unwrap(), sigma_brute(2, &[1.0, 2.0, 3.0]));
        assert_eq!(sigma(2, &spec(&[1.0, 2.0, 3.0])).unwrap(), 11.0);
        assert!(matches!(sigma(4, &spec(&[1.0, 2.0, 3.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn spectrum_rejects_bad_input() {
        assert!(Spectrum::new(vec![]).is_err());
        assert!(Spectrum::new(vec![1.0, f64::NAN]).is_err());
        // zero entries are legal
        assert!(Spectrum::new(vec![0.0, 0.0]).is_ok());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(sigma_ratio(0, &spec(&[2.0, 2.0])).unwrap(), 4.0);
        let c = 0.7;
        let n = 5;
        let r = sigma_ratio(1, &Spectrum::umbilic(n, c).unwrap()).unwrap();
        assert!((r - (n as f64 - 1.0) / 2.0 * c).abs() < 1e-15);
        let r = sigma_ratio(1, &spec(&[1.0, 2.0, 3.0])).unwrap();
        assert!((r - 11.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            sigma_ratio(1, &spec(&[1.0, -3.0, 2.0])),
            Err(Error::SingularRatio { k: 1 })
        );
    }

    #[test]
    fn cone_examples() {
        assert!(in_gamma_cone(3, &spec(&[0.1, 2.0, 5.0])).unwrap());
        assert!(!in_gamma_cone(2, &spec(&[3.0, -1.0])).unwrap());
        assert!(in_gamma_cone(1, &spec(&[3.0, -1.0])).unwrap());
        assert!(in_gamma_cone(0, &spec(&[3.0, -1.0])).is_err());
    }

    #[test]
    fn newton_maclaurin_examples() {
        for n in 2..7 {
            for k in 1..n {
                let m = newton_maclaurin_margin(k, &Spectrum::umbilic(n, 1.3).unwrap()).unwrap();
                assert!(m.abs() < 1e-10, "n={n} k={k} margin={m}");
            }
        }
        assert_eq!(newton_maclaurin_margin(1, &spec(&[1.0, 2.0])).unwrap(), 1.0);
        // brute force: 1*2*sigma_1^2 - 3*2*sigma_0*sigma_2 with sigma_1 = 4, sigma_2 = 5
        let v = [1.0, 1.0, 2.0];
        let expected = 2.0 * sigma_brute(1, &v).powi(2) - 6.0 * sigma_brute(2, &v);
        assert_eq!(expected, 2.0);
        assert_eq!(newton_maclaurin_margin(1, &spec(&v)).unwrap(), expected);
    }

    #[test]
    fn c_nk_examples() {
        assert!((c_nk(2, 1).unwrap() - 4.0).abs() < 1e-14);
        assert!((c_nk(3, 1).unwrap() - 3.0).abs() < 1e-14);
        assert!((c_nk(3, 2).unwrap() - 3f64.powf(1.5)).abs() < 1e-13);
        assert!(c_nk(3, 0).is_err());
        assert!(c_nk(3, 3).is_err());
    }

    /// Term-by-term expansion of the Gauss-Bonnet sum using brute-force sigmas.
    fn lk_oracle(n: usize, k: usize, v: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..=k {
            let coeff = binomial(k, i) / binomial(n, 2 * k - 2 * i);
            let term = coeff * sigma_brute(2 * k - 2 * i, v);
            total += if i % 2 == 0 { term } else { -term };
        }
        binomial(n, 2 * k) * factorial(2 * k) * total
    }

    #[test]
    fn gauss_bonnet_examples() {
        assert_eq!(gauss_bonnet_lk(4, 0, &spec(&[1.0, 2.0, 3.0, 4.0])).unwrap(), 1.0);
        let c = 0.8;
        let v = [c, c];
        // n = 2, k = 1: 2! C(2,2) (sigma_2 / C(2,2) - 1 / C(2,0)) = 2 (c^2 - 1)
        let lk = gauss_bonnet_lk(2, 1, &spec(&v)).unwrap();
        assert!((lk - lk_oracle(2, 1, &v)).abs() < 1e-14);
        assert!((lk - 2.0 * (c * c - 1.0)).abs() < 1e-14);
        // cancellation: sigma_2 = C(2,2) / C(2,0) makes both terms equal
        let lk = gauss_bonnet_lk(2, 1, &spec(&[2.0, 0.5])).unwrap();
        assert!(lk.abs() < 1e-15);
        let v = [0.3, 1.1, -0.4, 2.0, 0.9];
        assert!((gauss_bonnet_lk(5, 2, &spec(&v)).unwrap() - lk_oracle(5, 2, &v)).abs() < 1e-10);
        assert!(gauss_bonnet_lk(3, 2, &spec(&[1.0, 1.0, 1.0])).is_err());
    }

    fn spectra(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
        (1..=max_n).prop_flat_map(|n| prop::collection::vec(-5.0f64..5.0, n))
    }

    fn positive_spectra(min_n: usize, max_n: usize) -> impl Strategy<Value = Vec<f64>> {
        (min_n..=max_n).prop_flat_map(|n| prop::collection::vec(1e-3f64..10.0, n))
    }

    proptest! {
        #[test]
        fn recurrence_matches_enumeration(v in spectra(8)) {
            let s = spec(&v);
            let all = s.sigmas();
            for (k, &sk) in all.iter().enumerate().take(v.len() + 1) {
                let b = sigma_brute(k, &v);
                let scale = v.iter().map(|x| x.abs()).fold(1.0, f64::max).powi(k as i32)
                    * binomial(v.len(), k);
                prop_assert!((sk - b).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn permutation_invariance(v in spectra(8), seed in any::<u64>()) {
            let mut w = v.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed | 1;
            for i in (1..w.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                w.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let a = spec(&v).sigmas();
            let b = spec(&w).sigmas();
            for k in 0..a.len() {
                let scale = v.iter().map(|x| x.abs()).fold(1.0, f64::max).powi(k as i32)
                    * binomial(v.len(), k);
                prop_assert!((a[k] - b[k]).abs() <= 1e-14 * scale);
            }
        }

        #[test]
        fn remove_last_recurrence(v in positive_spectra(2, 8)) {
            let (head, last) = v.split_at(v.len() - 1);
            let full = spec(&v).sigmas();
            let part = spec(head).sigmas();
            for k in 1..=v.len() {
                let lower = if k <= head.len() { part[k] } else { 0.0 };
                let rhs = lower + last[0] * part[k - 1];
                prop_assert!((full[k] - rhs).abs() <= 1e-13 * full[k].abs());
            }
        }

        #[test]
        fn newton_maclaurin_nonnegative(v in positive_spectra(2, 8)) {
            let s = spec(&v);
            let sig = s.sigmas();
            for (k, &sk) in sig.iter().enumerate().take(v.len()).skip(1) {
                let kf = k as f64;
                let scale = kf * (v.len() as f64 - kf) * sk * sk;
                prop_assert!(newton_maclaurin_margin(k, &s).unwrap() >= -1e-12 * scale);
            }
        }

        #[test]
        fn maclaurin_with_identity_normalization(v in positive_spectra(2, 8)) {
            let s = spec(&v);
            let sig = s.sigmas();
            let n = v.len();
            for k in 1..n {
                let c = c_nk(n, k).unwrap();
                let p = (k as f64 + 1.0) / k as f64;
                // sharp form, equality at c I
                prop_assert!(c * sig[k + 1] <= sig[k].powf(p) * (1.0 + 1e-12));
                // constant on the other side, weaker since c_(n,k) >= 1
                prop_assert!(sig[k + 1] <= c * sig[k].powf(p) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn cone_nesting(v in spectra(6)) {
            let s = spec(&v);
            for k in 1..=v.len() {
                if in_gamma_cone(k, &s).unwrap() {
                    for j in 1..=k {
                        prop_assert!(in_gamma_cone(j, &s).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn maclaurin_equality_at_isotropic_spectra() {
        for n in 2..8 {
            for k in 1..n {
                let s = Spectrum::umbilic(n, 0.37).unwrap();
                let sig = s.sigmas();
                let p = (k as f64 + 1.0) / k as f64;
                let lhs = c_nk(n, k).unwrap() * sig[k + 1];
                let rhs = sig[k].powf(p);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn sigma_without_matches_direct() {
        let v = [0.5, -1.0, 2.0, 3.0];
        for skip in 0..4 {
            let rest: Vec<f64> = v.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| *x).collect();
            for k in 0..=3 {
                assert!((sigma_without(&v, skip, k) - sigma_brute(k, &rest)).abs() < 1e-14);
            }
        }
    }
}
