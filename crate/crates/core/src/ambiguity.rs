//! Ambiguity-set construction: moment fitting, CDF projection and
//! perturbation, likelihood weights, Wasserstein proximity and selection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use cddp_milp::{solve_lp, MilpModel, Sense, SolveStatus};
use rand_distr::{Distribution, Normal as NormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal, Normal, Weibull};
use statrs::function::gamma::ln_gamma;

use crate::error::{CddpError, Result};
use crate::instance::{CddpInstance, Cell};
use crate::par;
use crate::rng::{substream, TAG_EPSILON};
use crate::stats::{quantile_sorted, sorted_copy, Summary};

/// CDF values above this are reset to it before inversion.
pub const CDF_CAP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Weibull,
    Gamma,
    Lognormal,
}

pub const FAMILIES: [Family; 4] = [Family::Normal, Family::Weibull, Family::Gamma, Family::Lognormal];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "Normal",
            Family::Weibull => "Weibull",
            Family::Gamma => "Gamma",
            Family::Lognormal => "Lognormal",
        }
    }

    pub fn positive_support(self) -> bool {
        self != Family::Normal
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = CddpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Family::Normal),
            "weibull" => Ok(Family::Weibull),
            "gamma" => Ok(Family::Gamma),
            "lognormal" => Ok(Family::Lognormal),
            _ => Err(CddpError::Config(format!("unknown distribution family `{s}`"))),
        }
    }
}

/// Order of the transport distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rho {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl FromStr for Rho {
    type Err = CddpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Rho::One),
            "2" => Ok(Rho::Two),
            "inf" | "Inf" | "infinity" => Ok(Rho::Inf),
            _ => Err(CddpError::Config(format!("rho must be 1, 2 or inf, got `{s}`"))),
        }
    }
}

/// A family fitted to a mean and variance.
#[derive(Debug, Clone, Copy)]
pub enum Fitted {
    Normal(Normal),
    Weibull(Weibull),
    Gamma(Gamma),
    Lognormal(LogNormal),
}

fn weibull_cv2(k: f64) -> f64 {
    let g1 = ln_gamma(1.0 + 1.0 / k);
    let g2 = ln_gamma(1.0 + 2.0 / k);
    (g2 - 2.0 * g1).exp() - 1.0
}

/// Weibull shape with the given squared coefficient of variation.
fn weibull_shape(cv2: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.02_f64, 1.0e4_f64);
    if !(cv2 < weibull_cv2(lo) && cv2 > weibull_cv2(hi)) {
        return Err(CddpError::Config(format!("coefficient of variation {} outside the Weibull range", cv2.sqrt())));
    }
    // CV is decreasing in the shape; bisect in log space.
    while hi - lo > 1e-10 * lo.max(1.0) {
        let mid = (lo * hi).sqrt();
        if weibull_cv2(mid) > cv2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl Fitted {
    /// Moment matching of `family` to mean `mu` and variance `var > 0`.
    pub fn fit(family: Family, mu: f64, var: f64) -> Result<Fitted> {
        let bad = |why: &str| CddpError::Config(format!("cannot fit {family} to mean {mu}, variance {var}: {why}"));
        if !(var > 0.0) || !var.is_finite() || !mu.is_finite() {
            return Err(bad("variance must be positive"));
        }
        if family.positive_support() && !(mu > 0.0) {
            return Err(bad("mean must be positive"));
        }
        let sd = var.sqrt();
        Ok(match family {
            Family::Normal => Fitted::Normal(Normal::new(mu, sd).map_err(|e| bad(&e.to_string()))?),
            Family::Lognormal => {
                let s2 = (1.0 + var / (mu * mu)).ln();
                let loc = mu.ln() - 0.5 * s2;
                Fitted::Lognormal(LogNormal::new(loc, s2.sqrt()).map_err(|e| bad(&e.to_string()))?)
            }
            Family::Gamma => {
                let shape = mu * mu / var;
                let rate = mu / var;
                Fitted::Gamma(Gamma::new(shape, rate).map_err(|e| bad(&e.to_string()))?)
            }
            Family::Weibull => {
                let k = weibull_shape(var / (mu * mu))?;
                let scale = mu / ln_gamma(1.0 + 1.0 / k).exp();
                Fitted::Weibull(Weibull::new(k, scale).map_err(|e| bad(&e.to_string()))?)
            }
        })
    }

    pub fn family(&self) -> Family {
        match self {
            Fitted::Normal(_) => Family::Normal,
            Fitted::Weibull(_) => Family::Weibull,
            Fitted::Gamma(_) => Family::Gamma,
            Fitted::Lognormal(_) => Family::Lognormal,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Fitted::Normal(d) => d.cdf(x),
            Fitted::Weibull(d) => d.cdf(x),
            Fitted::Gamma(d) => d.cdf(x),
            Fitted::Lognormal(d) => d.cdf(x),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            Fitted::Normal(d) => d.inverse_cdf(u),
            Fitted::Weibull(d) => d.inverse_cdf(u),
            Fitted::Lognormal(d) => d.inverse_cdf(u),
            Fitted::Gamma(d) => {
                // Polish the library bracketing result with Newton steps.
                let mut x = d.inverse_cdf(u);
                for _ in 0..3 {
                    let f = d.pdf(x);
                    if !(f > 0.0) {
                        break;
                    }
                    let next = x - (d.cdf(x) - u) / f;
                    if !(next > 0.0) || !next.is_finite() {
                        break;
                    }
                    x = next;
                }
                x
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Fitted::Normal(d) => d.ln_pdf(x),
            Fitted::Weibull(d) => d.ln_pdf(x),
            Fitted::Gamma(d) => d.ln_pdf(x),
            Fitted::Lognormal(d) => d.ln_pdf(x),
        }
    }

    /// Analytic mean and variance of the fitted law.
    pub fn moments(&self) -> (f64, f64) {
        use statrs::statistics::Distribution as _;
        match self {
            Fitted::Normal(d) => (d.mean().unwrap(), d.variance().unwrap()),
            Fitted::Weibull(d) => (d.mean().unwrap(), d.variance().unwrap()),
            Fitted::Gamma(d) => (d.mean().unwrap(), d.variance().unwrap()),
            Fitted::Lognormal(d) => (d.mean().unwrap(), d.variance().unwrap()),
        }
    }
}

/// Weighted mean and variance with weights renormalized to sum to one.
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mu = values.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(x, w)| w * (x - mu) * (x - mu)).sum::<f64>() / total;
    (mu, var)
}

/// The nominal scenario set viewed as realizations of the parameters H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalDistribution {
    /// Parameter h is the volume cell `params[h]`.
    pub params: Vec<(usize, usize)>,
    /// H^ℓ: ascending parameter indices of each scenario group.
    pub group_params: Vec<Vec<usize>>,
    /// ℓ(ω).
    pub scenario_group: Vec<usize>,
    /// ξ̂_h^ω, aligned with `group_params[ℓ(ω)]`.
    pub realizations: Vec<Vec<f64>>,
    /// ŵ^ω.
    pub weights: Vec<f64>,
    /// w̃^ℓ.
    pub group_weights: Vec<f64>,
    /// μ̂_h.
    pub mean: Vec<f64>,
    /// σ̂²_h.
    pub var: Vec<f64>,
}

impl NominalDistribution {
    pub fn from_instance(inst: &CddpInstance) -> Result<Self> {
        let ng = inst.scenario_groups.len();
        let mut group_cells: Vec<BTreeMap<(usize, usize), ()>> = vec![BTreeMap::new(); ng];
        let mut all = BTreeMap::new();
        for sc in &inst.scenarios {
            for &(m, n, _) in &sc.h {
                group_cells[sc.group].insert((m, n), ());
                all.insert((m, n), 0usize);
            }
        }
        for (h, v) in all.values_mut().enumerate() {
            *v = h;
        }
        let params: Vec<(usize, usize)> = all.keys().copied().collect();
        let group_params: Vec<Vec<usize>> =
            group_cells.iter().map(|g| g.keys().map(|c| all[c]).collect()).collect();
        let mut realizations = Vec::with_capacity(inst.scenarios.len());
        for sc in &inst.scenarios {
            let lookup: BTreeMap<(usize, usize), f64> = sc.h.iter().map(|&(m, n, v)| ((m, n), v)).collect();
            realizations.push(
                group_params[sc.group]
                    .iter()
                    .map(|&h| lookup.get(&params[h]).copied().unwrap_or(0.0))
                    .collect(),
            );
        }
        let scenario_group: Vec<usize> = inst.scenarios.iter().map(|s| s.group).collect();
        let weights: Vec<f64> = inst.scenarios.iter().map(|s| s.weight).collect();
        let group_weights = inst.scenario_groups.iter().map(|g| g.weight).collect();
        let mut nd = NominalDistribution {
            params,
            group_params,
            scenario_group,
            realizations,
            weights,
            group_weights,
            mean: vec![],
            var: vec![],
        };
        let (mean, var) = nd.fit_moments()?;
        nd.mean = mean;
        nd.var = var;
        Ok(nd)
    }

    pub fn num_scenarios(&self) -> usize {
        self.weights.len()
    }

    /// Position of parameter `h` inside group `l`'s realization vectors.
    pub fn position(&self, l: usize, h: usize) -> Option<usize> {
        self.group_params[l].binary_search(&h).ok()
    }

    /// μ̂_h and σ̂²_h over the scenarios of the groups that contain h.
    pub fn fit_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let np = self.params.len();
        let mut vals: Vec<Vec<f64>> = vec![Vec::new(); np];
        let mut wts: Vec<Vec<f64>> = vec![Vec::new(); np];
        for (w, xs) in self.realizations.iter().enumerate() {
            let l = self.scenario_group[w];
            for (k, &h) in self.group_params[l].iter().enumerate() {
                vals[h].push(xs[k]);
                wts[h].push(self.weights[w]);
            }
        }
        let mut mean = Vec::with_capacity(np);
        let mut var = Vec::with_capacity(np);
        for h in 0..np {
            if vals[h].is_empty() {
                return Err(CddpError::Validation(format!("parameter {h} has no realization")));
            }
            let (m, v) = weighted_moments(&vals[h], &wts[h]);
            mean.push(m);
            var.push(v);
        }
        Ok((mean, var))
    }

    pub fn is_degenerate(&self, h: usize) -> bool {
        self.var[h] == 0.0
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
        };
        self.params == other.params
            && self.group_params == other.group_params
            && self.scenario_group == other.scenario_group
            && self.realizations.len() == other.realizations.len()
            && self.realizations.iter().zip(&other.realizations).all(|(a, b)| close(a, b))
            && close(&self.weights, &other.weights)
            && close(&self.group_weights, &other.group_weights)
            && close(&self.mean, &other.mean)
            && close(&self.var, &other.var)
    }
}

/// F_q(ξ̂) under the family fitted to (μ, σ²).
pub fn project_cdf(xi: f64, fitted: &Fitted, h: usize, omega: usize) -> Result<f64> {
    if fitted.family().positive_support() && !(xi > 0.0) {
        return Err(CddpError::Projection {
            h,
            omega,
            msg: format!("realization {xi} outside the support of {}", fitted.family()),
        });
    }
    Ok(fitted.cdf(xi))
}

/// Inverts a perturbed CDF value; `None` when the scenario must be dropped.
pub fn invert_perturbed(xi_hat: f64, u_hat: f64, eps: f64, fitted: &Fitted) -> Option<f64> {
    if eps == 0.0 {
        return Some(xi_hat);
    }
    let u = u_hat + eps;
    if u <= 0.0 {
        return None;
    }
    let x = fitted.inverse_cdf(u.min(CDF_CAP));
    Some(x.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub families: Vec<Family>,
    pub per_family: usize,
    pub sigma_eps: f64,
    pub rho: Rho,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { families: FAMILIES.to_vec(), per_family: 20, sigma_eps: 0.05, rho: Rho::Two, seed: 1 }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps > 0.0) || !self.sigma_eps.is_finite() {
            return Err(CddpError::Config("sigma_eps must be positive".into()));
        }
        if self.families.is_empty() || self.per_family == 0 {
            return Err(CddpError::Config("at least one candidate is required".into()));
        }
        Ok(())
    }
}

/// One distribution of the ambiguity set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityMember {
    pub id: usize,
    /// `None` for the nominal distribution itself.
    pub family: Option<Family>,
    /// Ω_p, ascending nominal scenario ids.
    pub scenarios: Vec<usize>,
    /// ξ^ω as `(m, n, value)` triples, aligned with `scenarios`.
    pub xi: Vec<Vec<Cell>>,
    /// ln L^ω, aligned with `scenarios`.
    pub log_likelihood: Vec<f64>,
    /// w^ω, aligned with `scenarios`.
    pub weights: Vec<f64>,
    /// l_p^ρ.
    pub proximity: f64,
}

impl AmbiguityMember {
    /// The nominal distribution as a member with zero proximity.
    pub fn nominal(nd: &NominalDistribution) -> AmbiguityMember {
        let n = nd.num_scenarios();
        AmbiguityMember {
            id: 0,
            family: None,
            scenarios: (0..n).collect(),
            xi: (0..n).map(|w| cells_of(nd, w, &nd.realizations[w])).collect(),
            log_likelihood: vec![0.0; n],
            weights: nd.weights.clone(),
            proximity: 0.0,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Realization vector of the k-th surviving scenario aligned with its group's parameters.
    pub fn realization(&self, nd: &NominalDistribution, k: usize) -> Vec<f64> {
        let l = nd.scenario_group[self.scenarios[k]];
        let mut out = vec![0.0; nd.group_params[l].len()];
        for &(m, n, v) in &self.xi[k] {
            let h = nd.params.binary_search(&(m, n)).expect("member cell is a parameter");
            out[nd.position(l, h).expect("cell belongs to the scenario group")] = v;
        }
        out
    }
}

fn cells_of(nd: &NominalDistribution, omega: usize, values: &[f64]) -> Vec<Cell> {
    let l = nd.scenario_group[omega];
    nd.group_params[l]
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&h, &v)| (nd.params[h].0, nd.params[h].1, v))
        .collect()
}

/// Normalized weights from log-likelihoods, per scenario group.
///
/// `groups[k]` is the group of the k-th surviving scenario. Returns `None`
/// when some group has no scenario with a finite likelihood.
pub fn normalize_weights(log_l: &[f64], groups: &[usize], group_weights: &[f64]) -> Option<Vec<f64>> {
    let mut out = vec![0.0; log_l.len()];
    for (l, &gw) in group_weights.iter().enumerate() {
        let members: Vec<usize> = (0..log_l.len()).filter(|&k| groups[k] == l).collect();
        let top = members.iter().map(|&k| log_l[k]).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return None;
        }
        let scaled: Vec<f64> = members.iter().map(|&k| (log_l[k] - top).exp()).collect();
        let total: f64 = scaled.iter().sum();
        for (&k, s) in members.iter().zip(&scaled) {
            out[k] = gw * s / total;
        }
    }
    Some(out)
}

/// d^ρ between a member realization and a nominal one over shared parameters.
fn distance(
    nd: &NominalDistribution,
    l: usize,
    xi: &[f64],
    l_hat: usize,
    xi_hat: &[f64],
    rho: Rho,
) -> Option<f64> {
    let mut shared = false;
    let mut acc: f64 = 0.0;
    for (k, &h) in nd.group_params[l].iter().enumerate() {
        let Some(k2) = nd.position(l_hat, h) else { continue };
        shared = true;
        let d = (xi[k] - xi_hat[k2]).abs();
        match rho {
            Rho::One => acc += d,
            Rho::Two => acc += d * d,
            Rho::Inf => acc = acc.max(d),
        }
    }
    shared.then_some(acc)
}

/// Balanced transportation LP: min Σ d η s.t. row sums `supply`, column sums `demand`.
/// `None` entries of `cost` are forbidden lanes.
pub fn transport_lp(supply: &[f64], demand: &[f64], cost: &[Vec<Option<f64>>]) -> Result<f64> {
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (ts - td).abs() > 1e-9 {
        return Err(CddpError::Rebalance(format!("supply {ts} and demand {td} differ")));
    }
    let mut model = MilpModel::new("transport");
    let mut rows_out: Vec<Vec<_>> = vec![Vec::new(); supply.len()];
    let mut rows_in: Vec<Vec<_>> = vec![Vec::new(); demand.len()];
    for (a, row) in cost.iter().enumerate() {
        for (b, c) in row.iter().enumerate() {
            if let Some(c) = c {
                let v = model.continuous(format!("eta[{a},{b}]"), 0.0, f64::INFINITY)?;
                model.set_obj(v, *c);
                rows_out[a].push((v, 1.0));
                rows_in[b].push((v, 1.0));
            }
        }
    }
    for (a, terms) in rows_out.into_iter().enumerate() {
        model.add_row(format!("supply[{a}]"), terms, Sense::Eq, supply[a])?;
    }
    for (b, terms) in rows_in.into_iter().enumerate() {
        model.add_row(format!("demand[{b}]"), terms, Sense::Eq, demand[b])?;
    }
    let sol = solve_lp(&model);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective.unwrap_or(0.0).max(0.0)),
        s => Err(CddpError::Rebalance(format!("transportation model ended {s:?}"))),
    }
}

/// l_p^ρ of a member with respect to the nominal distribution.
pub fn wasserstein_proximity(member: &AmbiguityMember, nd: &NominalDistribution, rho: Rho) -> Result<f64> {
    let real: Vec<Vec<f64>> = (0..member.scenarios.len()).map(|k| member.realization(nd, k)).collect();
    let cost: Vec<Vec<Option<f64>>> = member
        .scenarios
        .iter()
        .zip(&real)
        .map(|(&w, xi)| {
            (0..nd.num_scenarios())
                .map(|w2| {
                    distance(nd, nd.scenario_group[w], xi, nd.scenario_group[w2], &nd.realizations[w2], rho)
                })
                .collect()
        })
        .collect();
    transport_lp(&member.weights, &nd.weights, &cost)
}

/// Why a candidate did not become a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub family: Family,
    pub index: usize,
    pub reason: String,
}

/// Builds candidate `index` of `family` (its id is assigned by the caller).
pub fn perturb_candidate(
    nd: &NominalDistribution,
    family: Family,
    family_slot: usize,
    index: usize,
    config: &PerturbationConfig,
) -> Result<AmbiguityMember> {
    let fitted: Vec<Option<Fitted>> = (0..nd.params.len())
        .map(|h| {
            if nd.is_degenerate(h) {
                Ok(None)
            } else {
                Fitted::fit(family, nd.mean[h], nd.var[h]).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let sampler = NormalSampler::new(0.0, config.sigma_eps)
        .map_err(|e| CddpError::Config(format!("sigma_eps: {e}")))?;
    let mut scenarios = Vec::new();
    let mut xi = Vec::new();
    let mut log_l = Vec::new();
    for omega in 0..nd.num_scenarios() {
        let l = nd.scenario_group[omega];
        let mut rng = substream(config.seed, TAG_EPSILON, &[family_slot as u64, index as u64, omega as u64]);
        let eps: f64 = sampler.sample(&mut rng);
        let mut values = Vec::with_capacity(nd.group_params[l].len());
        let mut ll = 0.0;
        let mut dropped = false;
        for (k, &h) in nd.group_params[l].iter().enumerate() {
            let x_hat = nd.realizations[omega][k];
            let Some(f) = &fitted[h] else {
                values.push(x_hat);
                continue;
            };
            let u_hat = project_cdf(x_hat, f, h, omega)?;
            match invert_perturbed(x_hat, u_hat, eps, f) {
                Some(x) => {
                    ll += f.ln_pdf(x);
                    values.push(x);
                }
                None => {
                    dropped = true;
                    break;
                }
            }
        }
        if dropped {
            continue;
        }
        scenarios.push(omega);
        xi.push(cells_of(nd, omega, &values));
        log_l.push(ll);
    }
    let groups: Vec<usize> = scenarios.iter().map(|&w| nd.scenario_group[w]).collect();
    for l in 0..nd.group_weights.len() {
        if !groups.contains(&l) {
            return Err(CddpError::Rejected(format!(
                "{family} candidate {index} lost every scenario of group {l}"
            )));
        }
    }
    let weights = normalize_weights(&log_l, &groups, &nd.group_weights).ok_or_else(|| {
        CddpError::Rejected(format!("{family} candidate {index}: likelihoods vanish in some group"))
    })?;
    let mut member = AmbiguityMember {
        id: 0,
        family: Some(family),
        scenarios,
        xi,
        log_likelihood: log_l,
        weights,
        proximity: 0.0,
    };
    member.proximity = wasserstein_proximity(&member, nd, config.rho)?;
    Ok(member)
}

/// Outcome of scoring every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    /// Accepted candidates with ids `1..` in (family, index) order.
    pub members: Vec<AmbiguityMember>,
    pub rejected: Vec<Rejection>,
}

impl CandidatePool {
    pub fn proximities(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.proximity).collect()
    }
}

/// Generates and scores `per_family` candidates of every configured family.
pub fn generate_candidates(nd: &NominalDistribution, config: &PerturbationConfig) -> Result<CandidatePool> {
    config.validate()?;
    let jobs: Vec<(usize, Family, usize)> = config
        .families
        .iter()
        .flat_map(|&f| {
            let slot = FAMILIES.iter().position(|&g| g == f).unwrap();
            (0..config.per_family).map(move |i| (slot, f, i))
        })
        .collect();
    let outcomes = par::map(&jobs, |&(slot, fam, i)| perturb_candidate(nd, fam, slot, i, config));
    let mut pool = CandidatePool { members: Vec::new(), rejected: Vec::new() };
    for (&(_, family, index), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(mut m) => {
                m.id = pool.members.len() + 1;
                pool.members.push(m);
            }
            Err(CddpError::Rejected(reason)) => pool.rejected.push(Rejection { family, index, reason }),
            Err(e) => return Err(e),
        }
    }
    Ok(pool)
}

/// Members with proximity at most θ, ascending by (proximity, id), at most `max_members`.
pub fn select_ambiguity(candidates: &[AmbiguityMember], theta: f64, max_members: usize) -> Vec<AmbiguityMember> {
    let mut picked: Vec<&AmbiguityMember> = candidates.iter().filter(|m| m.proximity <= theta).collect();
    picked.sort_by(|a, b| a.proximity.total_cmp(&b.proximity).then(a.id.cmp(&b.id)));
    picked.into_iter().take(max_members).cloned().collect()
}

/// θ at the given centile (in percent) of the candidate proximities.
pub fn centile_radius(proximities: &[f64], centile: f64) -> f64 {
    quantile_sorted(&sorted_copy(proximities), centile / 100.0)
}

/// One row of the proximity statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityRow {
    pub label: String,
    pub count: usize,
    pub summary: Summary,
    pub centiles: Vec<(f64, f64)>,
}

/// Per-family rows followed by an `All` row, with the requested centiles.
pub fn proximity_statistics(pool: &CandidatePool, centiles: &[f64]) -> Vec<ProximityRow> {
    let mut rows = Vec::new();
    let mut fams: Vec<Family> = pool.members.iter().filter_map(|m| m.family).collect();
    fams.sort();
    fams.dedup();
    let row = |label: String, vals: Vec<f64>| {
        let s = sorted_copy(&vals);
        ProximityRow {
            label,
            count: s.len(),
            summary: Summary::of(&s),
            centiles: centiles.iter().map(|&c| (c, quantile_sorted(&s, c / 100.0))).collect(),
        }
    };
    for f in fams {
        let vals = pool.members.iter().filter(|m| m.family == Some(f)).map(|m| m.proximity).collect();
        rows.push(row(f.name().to_string(), vals));
    }
    if !pool.members.is_empty() {
        rows.push(row("All".into(), pool.proximities()));
    }
    rows
}

fn fmt_centile(c: f64) -> String {
    if c.fract() == 0.0 { format!("{}", c as i64) } else { format!("{c}") }
}

pub fn proximity_csv(rows: &[ProximityRow], centiles: &[f64]) -> String {
    let mut out = String::from("Distribution,Count,Min");
    for &c in centiles {
        out.push_str(&format!(",1st {}cent", fmt_centile(c)));
    }
    out.push_str(",1st Qu,Median,Mean,3rd Qu,Max\n");
    for r in rows {
        out.push_str(&format!("{},{},{}", r.label, r.count, r.summary.min));
        for (_, v) in &r.centiles {
            out.push_str(&format!(",{v}"));
        }
        let s = &r.summary;
        out.push_str(&format!(",{},{},{},{},{}\n", s.q1, s.median, s.mean, s.q3, s.max));
    }
    out
}

/// Ambiguity-set file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    pub config: PerturbationConfig,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centile: Option<f64>,
    pub max_members: usize,
    pub candidates_scored: usize,
    pub rejected: Vec<Rejection>,
    pub members: Vec<AmbiguityMember>,
}

impl AmbiguitySet {
    /// Checks the members against the instance's nominal scenarios.
    pub fn validate(&self, nd: &NominalDistribution) -> Result<()> {
        for m in &self.members {
            if m.scenarios.len() != m.weights.len() || m.scenarios.len() != m.xi.len() {
                return Err(CddpError::Validation(format!("member {}: ragged scenario data", m.id)));
            }
            if m.scenarios.iter().any(|&w| w >= nd.num_scenarios()) || m.scenarios.windows(2).any(|p| p[0] >= p[1]) {
                return Err(CddpError::Validation(format!("member {}: bad scenario ids", m.id)));
            }
            if m.weights.iter().any(|&w| !(w >= 0.0)) || (m.weight_sum() - 1.0).abs() > 1e-10 {
                return Err(CddpError::Validation(format!("member {}: weights must be nonnegative and sum to 1", m.id)));
            }
            for (k, cells) in m.xi.iter().enumerate() {
                let l = nd.scenario_group[m.scenarios[k]];
                for &(a, b, v) in cells {
                    let ok = nd
                        .params
                        .binary_search(&(a, b))
                        .ok()
                        .and_then(|h| nd.position(l, h))
                        .is_some();
                    if !ok || !(v >= 0.0) {
                        return Err(CddpError::Validation(format!(
                            "member {}: realization of cell ({a},{b}) in scenario {} is invalid",
                            m.id, m.scenarios[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
