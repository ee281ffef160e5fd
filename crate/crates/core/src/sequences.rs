//! The exact rational sequences driving the sawtooth construction.
//!
//! For a depth `N`:
//!
//! * `mu_k = 1 / (2k 2^k)` is the target measure of the set where `w = 2^-k`,
//! * `beta_N = 1 - sum mu_k` is the measure of the set where `w = 1`,
//! * `b_N = (sum 1/k) / (2 - sum 1/(k 2^k))` is the slope there,
//! * `alpha_j = sum_{k >= j} mu_k` is the mass still to be refined at level `j`,
//! * `h^j = alpha_j^-1 sum_{k >= j} mu_k (-2^k)` is the slope on that mass.
//!
//! Every identity between these numbers is checked with exact arithmetic.

use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::checks::{Check, CheckReport};
use crate::error::{Error, Result};
use crate::json;
use crate::scalar::pow2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTable {
    n: u32,
    #[serde(with = "json::rational")]
    b: Rational,
    #[serde(with = "json::rational_vec")]
    mu: Vec<Rational>,
    #[serde(with = "json::rational")]
    beta: Rational,
    #[serde(with = "json::rational_vec")]
    alpha: Vec<Rational>,
    #[serde(with = "json::rational_vec")]
    h: Vec<Rational>,
    #[serde(with = "json::rational_vec")]
    g_slope: Vec<Rational>,
    #[serde(with = "json::rational_vec")]
    w_level: Vec<Rational>,
}

fn mu(k: u32) -> Rational {
    Rational::from((1, 2 * k)) * pow2(-(k as i64))
}

fn harmonic(n: u32) -> Rational {
    (1..=n).map(|k| Rational::from((1, k))).sum()
}

/// `(b_n, beta_n)` straight from their defining formulas.
fn b_beta(n: u32) -> (Rational, Rational) {
    let weighted: Rational = (1..=n)
        .map(|k| Rational::from((1, k)) * pow2(-(k as i64)))
        .sum();
    let b = harmonic(n) / (Rational::from(2) - weighted);
    let beta = Rational::from(1) - (1..=n).map(mu).sum::<Rational>();
    (b, beta)
}

/// Build the table for depth `n >= 1`.
pub fn build_table(n: u32) -> Result<SequenceTable> {
    if n == 0 {
        return Err(Error::InvalidParameter("depth N must be at least 1".into()));
    }
    let mu: Vec<Rational> = (1..=n).map(mu).collect();
    let (b, beta) = b_beta(n);

    // suffix sums, walked from k = N down to 1
    let mut alpha = vec![Rational::new(); n as usize];
    let mut half_harmonic_tail = vec![Rational::new(); n as usize];
    let mut acc = Rational::new();
    let mut tail = Rational::new();
    for k in (1..=n).rev() {
        let i = (k - 1) as usize;
        acc += &mu[i];
        tail += Rational::from((1, 2 * k));
        alpha[i] = acc.clone();
        half_harmonic_tail[i] = tail.clone();
    }
    let h = alpha
        .iter()
        .zip(&half_harmonic_tail)
        .map(|(a, t)| -(t.clone() / a))
        .collect();
    let g_slope = (1..=n).map(|k| -pow2(k as i64)).collect();
    let w_level = (1..=n).map(|k| pow2(-(k as i64))).collect();

    Ok(SequenceTable {
        n,
        b,
        mu,
        beta,
        alpha,
        h,
        g_slope,
        w_level,
    })
}

impl SequenceTable {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// `b_N`, the slope on the set where `w = 1`.
    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn beta(&self) -> &Rational {
        &self.beta
    }

    /// `mu_k` for `1 <= k <= N`.
    pub fn mu(&self, k: u32) -> &Rational {
        &self.mu[self.idx(k)]
    }

    pub fn alpha(&self, j: u32) -> &Rational {
        &self.alpha[self.idx(j)]
    }

    pub fn h(&self, j: u32) -> &Rational {
        &self.h[self.idx(j)]
    }

    /// `-2^k`, the slope on the set where `w = 2^-k`.
    pub fn g_slope(&self, k: u32) -> &Rational {
        &self.g_slope[self.idx(k)]
    }

    /// `2^-k`.
    pub fn w_level(&self, k: u32) -> &Rational {
        &self.w_level[self.idx(k)]
    }

    fn idx(&self, k: u32) -> usize {
        assert!(
            (1..=self.n).contains(&k),
            "index {k} outside 1..={}",
            self.n
        );
        (k - 1) as usize
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: SequenceTable =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let n = t.n as usize;
        let lens = [
            t.mu.len(),
            t.alpha.len(),
            t.h.len(),
            t.g_slope.len(),
            t.w_level.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            return Err(Error::Serialization("sequence lengths disagree with N".into()));
        }
        Ok(t)
    }
}

pub type IdentityCheck = Check;
pub type IdentityReport = CheckReport;

/// Check the definitions and the three groups of algebraic identities the
/// construction relies on. Nothing is raised; failures are listed.
pub fn verify_identities(t: &SequenceTable) -> IdentityReport {
    let mut rep = IdentityReport::default();
    let n = t.n;
    let one = Rational::from(1);

    for k in 1..=n {
        rep.push_eq(format!("mu_{k} = 1/(2k 2^k)"), t.mu(k), &mu(k));
        rep.push_eq(format!("g_{k} = -2^k"), t.g_slope(k), &-pow2(k as i64));
        rep.push_eq(format!("w_{k} = 2^-k"), t.w_level(k), &pow2(-(k as i64)));
    }
    let (b, beta) = b_beta(n);
    rep.push_eq("b_N definition", t.b(), &b);
    rep.push_eq("beta_N definition", t.beta(), &beta);
    for j in 1..=n {
        let a: Rational = (j..=n).map(|k| t.mu(k).clone()).sum();
        rep.push_eq(format!("alpha_{j} = sum_(k>=j) mu_k"), t.alpha(j), &a);
        let tail: Rational = (j..=n).map(|k| Rational::from((1, 2 * k))).sum();
        rep.push_eq(
            format!("h^{j} = -alpha_j^-1 sum_(k>=j) 1/(2k)"),
            t.h(j),
            &-(tail / t.alpha(j)),
        );
        let floor = pow2(-(j as i64) - 1) / j;
        rep.push_ge(format!("alpha_{j} >= 2^(-j-1)/j"), t.alpha(j), &floor);
    }
    rep.push_eq("h^N = -2^N", t.h(n), &-pow2(n as i64));

    // (1) for every n' <= N, built from scratch, and for N with the stored values
    for m in 1..=n {
        let (bm, betam) = b_beta(m);
        let lhs: Rational = (1..=m).map(|k| mu(k) * -pow2(k as i64)).sum::<Rational>() + betam * bm;
        rep.push_eq(format!("(1) n={m}: sum mu_k(-2^k) + beta_n b_n = 0"), &lhs, &Rational::new());
    }
    let lhs: Rational = (1..=n)
        .map(|k| t.mu(k).clone() * t.g_slope(k))
        .sum::<Rational>()
        + t.beta().clone() * t.b();
    rep.push_eq("(1) stored table: sum mu_k(-2^k) + beta_N b_N = 0", &lhs, &Rational::new());

    // (2)
    rep.push_eq("(2) alpha_1 + beta_N = 1", &(t.alpha(1).clone() + t.beta()), &one);
    rep.push_eq(
        "(2) alpha_1 h^1 + beta_N b_N = 0",
        &(t.alpha(1).clone() * t.h(1) + t.beta().clone() * t.b()),
        &Rational::new(),
    );

    // (3)
    for k in 1..n {
        let ak = t.alpha(k);
        rep.push_eq(
            format!("(3) k={k}: alpha_(k+1)/alpha_k + mu_k/alpha_k = 1"),
            &((t.alpha(k + 1).clone() + t.mu(k)) / ak),
            &one,
        );
        let rhs = (t.alpha(k + 1).clone() * t.h(k + 1) + t.mu(k).clone() * t.g_slope(k)) / ak;
        rep.push_eq(
            format!("(3) k={k}: h^k = alpha_k^-1 (alpha_(k+1) h^(k+1) + mu_k (-2^k))"),
            t.h(k),
            &rhs,
        );
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn depth_one_values() {
        let t = build_table(1).unwrap();
        assert_eq!(*t.b(), q(2, 3));
        assert_eq!(*t.mu(1), q(1, 4));
        assert_eq!(*t.beta(), q(3, 4));
        assert_eq!(*t.alpha(1), q(1, 4));
        assert_eq!(*t.h(1), q(-2, 1));
    }

    #[test]
    fn depth_two_values() {
        let t = build_table(2).unwrap();
        assert_eq!(*t.mu(2), q(1, 16));
        assert_eq!(*t.alpha(1), q(5, 16));
        assert_eq!(*t.alpha(2), q(1, 16));
        assert_eq!(*t.beta(), q(11, 16));
        assert_eq!(*t.b(), q(12, 11));
        assert_eq!(*t.h(1), q(-12, 5));
        assert_eq!(*t.h(2), q(-4, 1));
    }

    #[test]
    fn rejects_zero_depth() {
        assert!(build_table(0).is_err());
    }

    #[test]
    fn last_slope_is_minus_two_to_the_n() {
        for n in 1..=20 {
            let t = build_table(n).unwrap();
            assert_eq!(*t.h(n), -pow2(n as i64));
        }
    }

    #[test]
    fn identities_hold_at_small_depth() {
        let t1 = build_table(1).unwrap();
        // alpha_1 h^1 + beta_1 b_1 = -1/2 + 1/2
        assert_eq!(t1.alpha(1).clone() * t1.h(1), q(-1, 2));
        assert_eq!(t1.beta().clone() * t1.b(), q(1, 2));
        assert!(verify_identities(&t1).all_passed());

        let t2 = build_table(2).unwrap();
        let rhs = (t2.alpha(2).clone() * t2.h(2) + t2.mu(1).clone() * q(-2, 1)) / t2.alpha(1);
        assert_eq!(rhs, q(-12, 5));
        assert!(verify_identities(&t2).all_passed());
    }

    #[test]
    fn perturbed_b_breaks_identity_two() {
        let mut t = build_table(3).unwrap();
        t.b += q(1, 1000);
        let rep = verify_identities(&t);
        assert!(!rep.all_passed());
        assert!(rep
            .failures()
            .any(|c| c.name == "(2) alpha_1 h^1 + beta_N b_N = 0"));
    }

    #[test]
    fn json_round_trip_and_shape_check() {
        let t = build_table(5).unwrap();
        let text = t.to_json().unwrap();
        assert_eq!(SequenceTable::from_json(&text).unwrap(), t);
        let broken = text.replacen("\"n\": 5", "\"n\": 6", 1);
        assert!(SequenceTable::from_json(&broken).is_err());
    }
}
