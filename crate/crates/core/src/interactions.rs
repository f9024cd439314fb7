//! Sign, strength and type of pairwise interspecific interactions.
//!
//! Flow-based measures use diact flows; storage-based measures substitute the
//! diact storages (and storages for throughflows) in the same formulas.

use std::fmt;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use thiserror::Error;

use crate::diact::{DiactField, FlowKind, Variant};
use crate::indicators::{Basis, EffectReport, IndexSeries};
use crate::scalar::Scalar;
use crate::solve::DecomposedTrajectory;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InteractionError {
    #[error("pair ({0}, {1}) must be two distinct compartments of the model")]
    Pair(usize, usize),
    #[error("storage-based interactions need every pair of variant `{0}` tracked")]
    MissingStorages(char),
    #[error("global strengths need `{expected}` effects, got `{got}`")]
    WrongVariant { expected: char, got: char },
    #[error("effect reports disagree in basis, kind or grid")]
    Mismatch,
}

/// Normalizer of the strength `μ = |m_ij − m_ji| / normalizer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scale {
    /// `τ^*_ij + τ^*_ji`.
    Pairwise,
    /// `τ^t_ij + τ^t_ji`.
    TransferRelative,
    /// `τ̌_i + τ̌_j`.
    #[default]
    ThroughflowRelative,
    /// `σ̌`.
    Global,
}

impl Scale {
    pub const ALL: [Scale; 4] = [
        Scale::Pairwise,
        Scale::TransferRelative,
        Scale::ThroughflowRelative,
        Scale::Global,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scale::Pairwise => "pairwise",
            Scale::TransferRelative => "transfer",
            Scale::ThroughflowRelative => "throughflow",
            Scale::Global => "global",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignStrength<T> {
    /// `+1`, `0` or `−1`.
    pub sign: i8,
    pub strength: T,
}

/// Thresholds of the classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassThresholds<T> {
    /// `μ^c` at or above this is commensalism.
    pub commensalism: T,
    /// `μ^c` at or below this is competition.
    pub competition: T,
    /// Zero tests use `zero_rel · σ` with `σ` the basis total.
    pub zero_rel: T,
}

impl<T: Scalar> Default for ClassThresholds<T> {
    fn default() -> Self {
        ClassThresholds {
            commensalism: T::lit(0.75),
            competition: T::lit(0.25),
            zero_rel: T::lit(1e-9),
        }
    }
}

/// Interaction type; compartment indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InteractionType {
    Neutralism,
    Mutualism,
    Commensalism,
    Competition,
    /// Shared donors whose `μ^c` lies between the two thresholds.
    MixedDonorMediated,
    /// The first compartment takes direct flow from the second.
    Exploitation(usize, usize),
    /// Direct flows both ways that differ.
    Unclassified,
    /// More than one row fired.
    Ambiguous(Vec<InteractionType>),
}

impl InteractionType {
    pub fn is_neutral(&self) -> bool {
        matches!(self, InteractionType::Neutralism)
    }

    /// Label with compartment names, e.g. `exploitation(3,2)`.
    pub fn label(&self, names: &[String]) -> String {
        match self {
            InteractionType::Neutralism => "neutralism".into(),
            InteractionType::Mutualism => "mutualism".into(),
            InteractionType::Commensalism => "commensalism".into(),
            InteractionType::Competition => "competition".into(),
            InteractionType::MixedDonorMediated => "mixed donor-mediated".into(),
            InteractionType::Exploitation(i, j) => {
                format!("exploitation({},{})", names[*i], names[*j])
            }
            InteractionType::Unclassified => "unclassified".into(),
            InteractionType::Ambiguous(rows) => {
                let inner: Vec<String> = rows.iter().map(|r| r.label(names)).collect();
                format!("ambiguous[{}]", inner.join("|"))
            }
        }
    }
}

impl fmt::Display for InteractionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            InteractionType::Exploitation(i, j) => i.max(j) + 1,
            _ => 0,
        };
        let names: Vec<String> = (1..=n.max(1)).map(|k| k.to_string()).collect();
        f.write_str(&self.label(&names))
    }
}

/// Verdict for a pair at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict<T> {
    pub kind: InteractionType,
    /// Strength of the classified type; `None` for unclassified or ambiguous samples.
    pub strength: Option<T>,
    /// Sign and throughflow-relative strength of every variant, by [`Variant::index`].
    pub signs: [SignStrength<T>; 5],
}

/// Classification of one pair over the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSeries<T> {
    pub pair: (usize, usize),
    pub basis: Basis,
    pub kind: FlowKind,
    pub grid: Vec<T>,
    pub verdicts: Vec<PairVerdict<T>>,
}

impl<T: Scalar> InteractionSeries<T> {
    /// Distinct non-neutral verdicts in order of first appearance.
    pub fn non_neutral(&self) -> Vec<InteractionType> {
        let mut out: Vec<InteractionType> = Vec::new();
        for v in &self.verdicts {
            if !v.kind.is_neutral() && !out.contains(&v.kind) {
                out.push(v.kind.clone());
            }
        }
        out
    }

    pub fn strength(&self) -> IndexSeries<T> {
        IndexSeries::new(
            self.grid.clone(),
            self.verdicts.iter().map(|v| v.strength).collect(),
        )
    }
}

/// Diact quantities of one basis and kind, read per sample.
struct BasisView<'a, T> {
    field: &'a DiactField<T>,
    traj: &'a DecomposedTrajectory<T>,
    basis: Basis,
    kind: FlowKind,
}

impl<'a, T: Scalar> BasisView<'a, T> {
    fn new(
        field: &'a DiactField<T>,
        traj: &'a DecomposedTrajectory<T>,
        basis: Basis,
        kind: FlowKind,
        variants: &[Variant],
    ) -> Result<Self, InteractionError> {
        if basis == Basis::Storage {
            for &v in variants {
                if !field.storages.has_full(traj.n, v) {
                    return Err(InteractionError::MissingStorages(v.letter()));
                }
            }
        }
        Ok(BasisView {
            field,
            traj,
            basis,
            kind,
        })
    }

    fn matrix(&self, v: Variant, s: usize) -> Array2<T> {
        match self.basis {
            Basis::Flow => self.field.samples[s].flows(self.kind, v).clone(),
            Basis::Storage => self
                .field
                .storages
                .matrix(self.traj.n, v, self.kind, s)
                .expect("checked on construction"),
        }
    }

    /// `τ̌` or `x`.
    fn inward(&self, s: usize) -> &Array1<T> {
        match self.basis {
            Basis::Flow => &self.traj.flows[s].tau_in,
            Basis::Storage => &self.traj.flows[s].x,
        }
    }

    /// `τ̂` or `x`.
    fn outward(&self, s: usize) -> &Array1<T> {
        match self.basis {
            Basis::Flow => &self.traj.flows[s].tau_out,
            Basis::Storage => &self.traj.flows[s].x,
        }
    }

    /// `σ̌` or `σ^x`.
    fn total(&self, s: usize) -> T {
        self.inward(s).sum()
    }
}

fn ratio<T: Scalar>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// `δ = sgn(m_ij − m_ji)` and `μ = |m_ij − m_ji| / normalizer`.
pub fn sign_strength<T: Scalar>(
    m: &Array2<T>,
    transfer: &Array2<T>,
    inward: &Array1<T>,
    total: T,
    (i, j): (usize, usize),
    scale: Scale,
) -> SignStrength<T> {
    let diff = m[[i, j]] - m[[j, i]];
    let sign = if diff > T::zero() {
        1
    } else if diff < T::zero() {
        -1
    } else {
        0
    };
    let den = match scale {
        Scale::Pairwise => m[[i, j]] + m[[j, i]],
        Scale::TransferRelative => transfer[[i, j]] + transfer[[j, i]],
        Scale::ThroughflowRelative => inward[i] + inward[j],
        Scale::Global => total,
    };
    SignStrength {
        sign,
        strength: ratio(diff.abs(), den),
    }
}

fn check_pair(n: usize, (i, j): (usize, usize)) -> Result<(), InteractionError> {
    if i == j || i >= n || j >= n {
        return Err(InteractionError::Pair(i, j));
    }
    Ok(())
}

/// Sign and strength series of one variant at one scale.
#[allow(clippy::too_many_arguments)]
pub fn diact_sign_strength<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    pair: (usize, usize),
    variant: Variant,
    kind: FlowKind,
    basis: Basis,
    scale: Scale,
) -> Result<Vec<SignStrength<T>>, InteractionError> {
    check_pair(traj.n, pair)?;
    let mut needed = vec![variant];
    if scale == Scale::TransferRelative {
        needed.push(Variant::Transfer);
    }
    let view = BasisView::new(field, traj, basis, kind, &needed)?;
    Ok((0..traj.len())
        .map(|s| {
            let m = view.matrix(variant, s);
            let tr = if scale == Scale::TransferRelative {
                view.matrix(Variant::Transfer, s)
            } else {
                Array2::zeros((0, 0))
            };
            sign_strength(&m, &tr, view.inward(s), view.total(s), pair, scale)
        })
        .collect())
}

/// Inputs of the classification at one sample.
struct Snapshot<'a, T> {
    d: &'a Array2<T>,
    ind: &'a Array2<T>,
    inward: &'a Array1<T>,
    outward: &'a Array1<T>,
    eps: T,
}

fn classify_sample<T: Scalar>(
    snap: &Snapshot<'_, T>,
    (i, j): (usize, usize),
    th: &ClassThresholds<T>,
) -> (InteractionType, Option<T>) {
    let Snapshot {
        d,
        ind,
        inward,
        outward,
        eps,
    } = *snap;
    let zero = |v: T| v.abs() <= eps;
    let n = d.nrows();
    let mut rows: Vec<(InteractionType, T)> = Vec::new();

    if zero(d[[i, j]] - d[[j, i]]) {
        let donors: Vec<usize> = (0..n)
            .filter(|&k| k != i && k != j && !zero(d[[i, k]]) && !zero(d[[j, k]]))
            .collect();
        if donors.is_empty() {
            if zero(ind[[i, j]] - ind[[j, i]]) {
                rows.push((InteractionType::Neutralism, T::zero()));
            } else {
                let mu = ratio(ind[[i, j]] + ind[[j, i]], inward[i] + inward[j]);
                rows.push((InteractionType::Mutualism, mu));
            }
        } else {
            // Donors pooled: Σ_k |d_ik − d_jk| / Σ_k (d_ik + d_jk).
            let (num, den) = donors.iter().fold((T::zero(), T::zero()), |(a, b), &k| {
                (a + (d[[i, k]] - d[[j, k]]).abs(), b + d[[i, k]] + d[[j, k]])
            });
            let mu = ratio(num, den);
            let kind = if mu >= th.commensalism {
                InteractionType::Commensalism
            } else if mu <= th.competition {
                InteractionType::Competition
            } else {
                InteractionType::MixedDonorMediated
            };
            rows.push((kind, mu));
        }
    }
    for (a, b) in [(i, j), (j, i)] {
        if d[[a, b]] > eps && zero(d[[b, a]]) {
            rows.push((
                InteractionType::Exploitation(a, b),
                ratio(d[[a, b]], outward[b]),
            ));
        }
    }

    match rows.len() {
        0 => (InteractionType::Unclassified, None),
        1 => {
            let (k, mu) = rows.pop().expect("one row");
            (k, Some(mu))
        }
        _ => (
            InteractionType::Ambiguous(rows.into_iter().map(|(k, _)| k).collect()),
            None,
        ),
    }
}

/// Classify one pair at every sample.
pub fn classify_pair<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    pair: (usize, usize),
    kind: FlowKind,
    basis: Basis,
    thresholds: &ClassThresholds<T>,
) -> Result<InteractionSeries<T>, InteractionError> {
    check_pair(traj.n, pair)?;
    let view = BasisView::new(field, traj, basis, kind, &Variant::ALL)?;
    let verdicts = (0..traj.len())
        .map(|s| {
            let mats: Vec<Array2<T>> = Variant::ALL.iter().map(|&v| view.matrix(v, s)).collect();
            let inward = view.inward(s);
            let total = view.total(s);
            let transfer = &mats[Variant::Transfer.index()];
            let signs = std::array::from_fn(|v| {
                sign_strength(
                    &mats[v],
                    transfer,
                    inward,
                    total,
                    pair,
                    Scale::ThroughflowRelative,
                )
            });
            let snap = Snapshot {
                d: &mats[Variant::Direct.index()],
                ind: &mats[Variant::Indirect.index()],
                inward,
                outward: view.outward(s),
                eps: thresholds.zero_rel * total,
            };
            let (kind, strength) = classify_sample(&snap, pair, thresholds);
            PairVerdict {
                kind,
                strength,
                signs,
            }
        })
        .collect();
    Ok(InteractionSeries {
        pair,
        basis,
        kind,
        grid: traj.grid.clone(),
        verdicts,
    })
}

/// Classify every unordered pair; pairs are processed in parallel.
pub fn classify_all<T: Scalar>(
    field: &DiactField<T>,
    traj: &DecomposedTrajectory<T>,
    kind: FlowKind,
    basis: Basis,
    thresholds: &ClassThresholds<T>,
) -> Result<Vec<InteractionSeries<T>>, InteractionError> {
    let n = traj.n;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    pairs
        .into_par_iter()
        .map(|p| classify_pair(field, traj, p, kind, basis, thresholds))
        .collect()
}

/// Mutualism and exploitation strengths at the global scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStrengths<T> {
    pub pair: (usize, usize),
    /// `μ^m = 𝚒_ij + 𝚒_ji`.
    pub mutualism: IndexSeries<T>,
    /// `μ^e = τ^d_ij / σ̂` (storages: `x^d_ij / σ^x`).
    pub exploitation_outward: IndexSeries<T>,
    /// `μ^e = τ^d_ij / σ̌ = 𝚍_ij`.
    pub exploitation_inward: IndexSeries<T>,
}

pub fn global_scale_strengths<T: Scalar>(
    direct: &EffectReport<T>,
    indirect: &EffectReport<T>,
    (i, j): (usize, usize),
) -> Result<GlobalStrengths<T>, InteractionError> {
    for (rep, v) in [(direct, Variant::Direct), (indirect, Variant::Indirect)] {
        if rep.variant != v {
            return Err(InteractionError::WrongVariant {
                expected: v.letter(),
                got: rep.variant.letter(),
            });
        }
    }
    if direct.basis != indirect.basis
        || direct.kind != indirect.kind
        || direct.grid != indirect.grid
    {
        return Err(InteractionError::Mismatch);
    }
    check_pair(direct.n(), (i, j))?;
    let ii = indirect.entry(i, j);
    let ji = indirect.entry(j, i);
    let mutualism = IndexSeries::new(
        direct.grid.clone(),
        ii.values
            .iter()
            .zip(&ji.values)
            .map(|(a, b)| a.zip(*b).map(|(a, b)| a + b))
            .collect(),
    );
    let outward = (0..direct.len())
        .map(|s| {
            let sig = match direct.basis {
                Basis::Flow => direct.sigma_out[s],
                Basis::Storage => direct.sigma_x[s],
            };
            (sig > T::zero()).then(|| direct.raw[s][[i, j]] / sig)
        })
        .collect();
    Ok(GlobalStrengths {
        pair: (i, j),
        mutualism,
        exploitation_outward: IndexSeries::new(direct.grid.clone(), outward),
        exploitation_inward: direct.entry(i, j),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn snap<'a>(d: &'a Array2<f64>, ind: &'a Array2<f64>, x: &'a Array1<f64>) -> Snapshot<'a, f64> {
        Snapshot {
            d,
            ind,
            inward: x,
            outward: x,
            eps: 1e-12,
        }
    }

    #[test]
    fn disconnected_pair_is_neutral() {
        let z = Array2::zeros((3, 3));
        let x = array![1.0, 1.0, 1.0];
        let (k, mu) = classify_sample(&snap(&z, &z, &x), (0, 1), &ClassThresholds::default());
        assert_eq!(k, InteractionType::Neutralism);
        assert_eq!(mu, Some(0.0));
        let s = sign_strength(&z, &z, &x, 3.0, (0, 1), Scale::ThroughflowRelative);
        assert_eq!((s.sign, s.strength), (0, 0.0));
    }

    #[test]
    fn symmetric_fan_is_competition() {
        // Compartments 0 and 1 both fed equally by 2.
        let d = array![[0.0, 0.0, 0.5], [0.0, 0.0, 0.5], [0.0, 0.0, 0.0]];
        let z = Array2::zeros((3, 3));
        let x = array![1.0, 1.0, 1.0];
        let (k, mu) = classify_sample(&snap(&d, &z, &x), (0, 1), &ClassThresholds::default());
        assert_eq!(k, InteractionType::Competition);
        assert_eq!(mu, Some(0.0));
    }

    #[test]
    fn one_way_flow_is_exploitation() {
        let d = array![[0.0, 0.0], [0.3, 0.0]];
        let z = Array2::zeros((2, 2));
        let x = array![2.0, 1.0];
        let (k, mu) = classify_sample(&snap(&d, &z, &x), (0, 1), &ClassThresholds::default());
        assert_eq!(k, InteractionType::Exploitation(1, 0));
        assert_eq!(mu, Some(0.15));
        assert_eq!(k.to_string(), "exploitation(2,1)");
    }

    #[test]
    fn sign_is_antisymmetric() {
        let m = array![[0.0, 0.2], [0.7, 0.0]];
        let x = array![1.0, 3.0];
        for scale in Scale::ALL {
            let a = sign_strength(&m, &m, &x, 4.0, (0, 1), scale);
            let b = sign_strength(&m, &m, &x, 4.0, (1, 0), scale);
            assert_eq!(a.sign, -b.sign);
            assert_eq!(a.strength, b.strength);
            assert!((0.0..=1.0).contains(&a.strength));
        }
    }

    #[test]
    fn indirect_exchange_is_mutualism() {
        let z = Array2::zeros((2, 2));
        let ind = array![[0.0, 0.3], [0.1, 0.0]];
        let x = array![1.0, 1.0];
        let (k, mu) = classify_sample(&snap(&z, &ind, &x), (0, 1), &ClassThresholds::default());
        assert_eq!(k, InteractionType::Mutualism);
        assert!((mu.unwrap() - 0.2).abs() < 1e-15);
    }
}
