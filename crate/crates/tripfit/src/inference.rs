//! Point prediction of OD travel times under a fitted mixture and the
//! evaluation metrics built on them. Which point estimate is right
//! depends on the metric: the geometric mean minimizes squared log
//! error, the arithmetic mean minimizes squared error, and the mixture
//! mode maximizes plain accuracy.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::choice::enumerate_paths;
use crate::mixture::{Model, Observation, TimeDensity, ENUMERATION_CAP};
use crate::network::NodeId;
use crate::numeric::logsumexp;
use crate::parallel::indexed_map;
use crate::{Error, Result};

/// Hard cap on mode-search grid knots.
pub const MODE_KNOT_CAP: usize = 512;
/// Minimum knot spacing as a fraction of the sample median.
pub const MODE_SPACING_FRACTION: f64 = 0.01;

/// Point predictions for one OD pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub o: NodeId,
    pub d: NodeId,
    /// Minimizes expected squared log error.
    pub geomean: f64,
    /// Minimizes expected squared error.
    pub mean: f64,
    /// Maximizer of the mixture density.
    pub mode: f64,
    /// Routes behind the estimate: enumerated path count or draws.
    pub samples: usize,
    /// True when full enumeration replaced Monte Carlo.
    pub exact: bool,
}

/// Route-time mixture components for an OD pair: (t̂, weight) with
/// weights summing to one. Exact by enumeration when the path set has at
/// most `cap` members, sampled otherwise; `cap` = 0 forces sampling.
fn mixture_components<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
    cap: usize,
) -> Result<(Vec<(f64, f64)>, usize, bool)> {
    let enumerated = if cap > 0 {
        enumerate_paths(model.graph(), o, d, cap)?
    } else {
        None
    };
    let (mut comps, used, exact) = match enumerated {
        Some(paths) => {
            let logliks: Vec<f64> = paths
                .iter()
                .map(|p| model.values().path_loglik(p, o, d))
                .collect::<Result<_>>()?;
            let total = logsumexp(&logliks);
            if !total.is_finite() {
                return Err(Error::Unreachable { origin: o, dest: d });
            }
            let comps: Vec<(f64, f64)> = paths
                .iter()
                .zip(&logliks)
                .map(|(p, &ll)| (model.path_time(p), (ll - total).exp()))
                .collect();
            let n = comps.len();
            (comps, n, true)
        }
        None => {
            if k == 0 {
                return Err(Error::InvalidInput("need at least one sample".into()));
            }
            let w = 1.0 / k as f64;
            let mut comps = Vec::with_capacity(k);
            for _ in 0..k {
                let route = model.sample_route(o, d, rng)?;
                comps.push((model.path_time(&route), w));
            }
            (comps, k, false)
        }
    };
    comps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(comps.len());
    for (theta, w) in comps {
        match merged.last_mut() {
            Some(last) if last.0 == theta => last.1 += w,
            _ => merged.push((theta, w)),
        }
    }
    Ok((merged, used, exact))
}

fn geomean_of(comps: &[(f64, f64)], density: TimeDensity) -> f64 {
    comps
        .iter()
        .map(|&(theta, w)| w * density.expected_log(theta))
        .sum::<f64>()
        .exp()
}

fn mean_of(comps: &[(f64, f64)], density: TimeDensity) -> f64 {
    comps.iter().map(|&(theta, w)| w * theta).sum::<f64>() * density.mean_multiplier()
}

fn weighted_median(comps: &[(f64, f64)]) -> f64 {
    let total: f64 = comps.iter().map(|&(_, w)| w).sum();
    let mut cum = 0.0;
    for &(theta, w) in comps {
        cum += w;
        if cum >= 0.5 * total {
            return theta;
        }
    }
    comps.last().map(|&(theta, _)| theta).unwrap_or(1.0)
}

/// Maximizer of the mixture density over an adaptive grid: knots at each
/// component's own density peak plus evenly spaced fills between
/// neighbors, spacing at least a fixed fraction of the sample median,
/// total count capped.
fn mode_of(comps: &[(f64, f64)], density: TimeDensity) -> Result<f64> {
    if comps.is_empty() {
        return Err(Error::InvalidInput("no mixture components".into()));
    }
    if density == TimeDensity::Point {
        // A mixture of point masses peaks at its heaviest atom.
        let best = comps
            .iter()
            .fold((f64::NEG_INFINITY, 0.0), |acc, &(theta, w)| {
                if w > acc.0 {
                    (w, theta)
                } else {
                    acc
                }
            });
        return Ok(best.1);
    }
    let mut centers: Vec<f64> = comps.iter().map(|&(theta, _)| density.mode(theta)).collect();
    centers.dedup();
    let spacing = MODE_SPACING_FRACTION * weighted_median(comps);
    let mut knots = centers.clone();
    if knots.len() < MODE_KNOT_CAP {
        let budget = MODE_KNOT_CAP - knots.len();
        let desired: Vec<usize> = centers
            .windows(2)
            .map(|w| ((w[1] - w[0]) / spacing).floor().max(0.0) as usize)
            .map(|n| n.saturating_sub(1))
            .collect();
        let wanted: usize = desired.iter().sum();
        let shrink = if wanted > budget {
            budget as f64 / wanted as f64
        } else {
            1.0
        };
        for (gap, &want) in centers.windows(2).zip(&desired) {
            let n = (want as f64 * shrink).floor() as usize;
            for i in 1..=n {
                knots.push(gap[0] + (gap[1] - gap[0]) * i as f64 / (n + 1) as f64);
            }
        }
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
    } else {
        let m = knots.len();
        knots = (0..MODE_KNOT_CAP)
            .map(|i| knots[i * (m - 1) / (MODE_KNOT_CAP - 1)])
            .collect();
        knots.dedup();
    }
    let mut best = (f64::NEG_INFINITY, knots[0]);
    for &x in &knots {
        let lp = logsumexp(
            &comps
                .iter()
                .map(|&(theta, w)| w.ln() + density.logpdf(x, theta).unwrap_or(f64::NEG_INFINITY))
                .collect::<Vec<f64>>(),
        );
        if lp > best.0 {
            best = (lp, x);
        }
    }
    Ok(best.1)
}

/// All three point predictions at once, sharing one component set.
/// Enumeration replaces sampling automatically on small path sets.
pub fn predict<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<Prediction> {
    predict_with_cap(model, o, d, k, rng, ENUMERATION_CAP)
}

/// Like [`predict`] but always Monte Carlo, even when the path set is
/// enumerable; the estimator whose error the exact version eliminates.
pub fn predict_sampled<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<Prediction> {
    predict_with_cap(model, o, d, k, rng, 0)
}

fn predict_with_cap<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
    cap: usize,
) -> Result<Prediction> {
    let (comps, samples, exact) = mixture_components(model, o, d, k, rng, cap)?;
    let density = model.density();
    Ok(Prediction {
        o,
        d,
        geomean: geomean_of(&comps, density),
        mean: mean_of(&comps, density),
        mode: mode_of(&comps, density)?,
        samples,
        exact,
    })
}

/// Geometric-mean travel time prediction, the squared-log-error
/// minimizer.
pub fn predict_geomean<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let (comps, _, _) = mixture_components(model, o, d, k, rng, ENUMERATION_CAP)?;
    Ok(geomean_of(&comps, model.density()))
}

/// Expected travel time prediction, the squared-error minimizer.
pub fn predict_mean<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let (comps, _, _) = mixture_components(model, o, d, k, rng, ENUMERATION_CAP)?;
    Ok(mean_of(&comps, model.density()))
}

/// Mixture-density mode prediction via adaptive grid search.
pub fn predict_mode<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let (comps, _, _) = mixture_components(model, o, d, k, rng, ENUMERATION_CAP)?;
    mode_of(&comps, model.density())
}

/// Root mean squared log error of (prediction, observed) pairs.
pub fn rmsle(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to score".into()));
    }
    let mut total = 0.0;
    for &(pred, obs) in pairs {
        if !(pred > 0.0) || !(obs > 0.0) {
            return Err(Error::InvalidInput(format!(
                "squared log error needs positive values, got ({pred}, {obs})"
            )));
        }
        total += (pred / obs).ln().powi(2);
    }
    Ok((total / pairs.len() as f64).sqrt())
}

/// One evaluated OD group: observed times against each predictor's
/// estimate, with per-predictor mean squared log error over the group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdReportRow {
    pub o: NodeId,
    pub d: NodeId,
    pub n: usize,
    /// Geometric mean of the group's observed times.
    pub t_observed: f64,
    pub pred_geomean: f64,
    pub pred_mean: f64,
    pub pred_mode: f64,
    pub sqerr_geomean: f64,
    pub sqerr_mean: f64,
    pub sqerr_mode: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<OdReportRow>,
    pub n_observations: usize,
    pub rmsle_geomean: f64,
    pub rmsle_mean: f64,
    pub rmsle_mode: f64,
}

/// Evaluates every timed observation against the model's predictions,
/// grouped by OD pair. The model's destination set must cover the data.
/// Groups are keyed and processed in sorted OD order with per-group seed
/// streams, so the report is independent of observation ordering.
pub fn evaluate(
    model: &Model,
    observations: &[Observation],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut groups: BTreeMap<(NodeId, NodeId), Vec<(f64, f64)>> = BTreeMap::new();
    for obs in observations {
        if let (Some(d), Some(t)) = (obs.effective_dest(), obs.t) {
            groups.entry((obs.o, d)).or_default().push((t, obs.weight));
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput(
            "no timed observations to evaluate".into(),
        ));
    }
    let entries: Vec<((NodeId, NodeId), Vec<(f64, f64)>)> = groups
        .into_iter()
        .map(|(od, mut times)| {
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (od, times)
        })
        .collect();
    let rows = indexed_map(&entries, |i, ((o, d), times)| -> Result<OdReportRow> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let pred = predict(model, *o, *d, k, &mut rng)?;
        let weight: f64 = times.iter().map(|&(_, w)| w).sum();
        let log_mean = times.iter().map(|&(t, w)| w * t.ln()).sum::<f64>() / weight;
        let sq = |p: f64| {
            times
                .iter()
                .map(|&(t, w)| w * (p / t).ln().powi(2))
                .sum::<f64>()
                / weight
        };
        Ok(OdReportRow {
            o: *o,
            d: *d,
            n: times.len(),
            t_observed: log_mean.exp(),
            pred_geomean: pred.geomean,
            pred_mean: pred.mean,
            pred_mode: pred.mode,
            sqerr_geomean: sq(pred.geomean),
            sqerr_mean: sq(pred.mean),
            sqerr_mode: sq(pred.mode),
        })
    });
    let rows: Vec<OdReportRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut n_observations = 0usize;
    let mut weight_total = 0.0;
    let (mut e_geo, mut e_mean, mut e_mode) = (0.0, 0.0, 0.0);
    for (row, (_, times)) in rows.iter().zip(&entries) {
        n_observations += row.n;
        let w: f64 = times.iter().map(|&(_, w)| w).sum();
        weight_total += w;
        e_geo += w * row.sqerr_geomean;
        e_mean += w * row.sqerr_mean;
        e_mode += w * row.sqerr_mode;
    }
    Ok(EvalReport {
        rows,
        n_observations,
        rmsle_geomean: (e_geo / weight_total).sqrt(),
        rmsle_mean: (e_mean / weight_total).sqrt(),
        rmsle_mode: (e_mode / weight_total).sqrt(),
    })
}

/// Writes the report as a comma-separated table followed by a summary
/// block in comment lines.
pub fn write_report<W: IoWrite>(report: &EvalReport, w: &mut W) -> Result<()> {
    writeln!(
        w,
        "o,d,n,t_observed,pred_geomean,pred_mean,pred_mode,sqerr_geomean,sqerr_mean,sqerr_mode"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.o,
            r.d,
            r.n,
            r.t_observed,
            r.pred_geomean,
            r.pred_mean,
            r.pred_mode,
            r.sqerr_geomean,
            r.sqerr_mean,
            r.sqerr_mode
        )?;
    }
    writeln!(w, "# n_observations={}", report.n_observations)?;
    writeln!(w, "# rmsle_geomean={}", report.rmsle_geomean)?;
    writeln!(w, "# rmsle_mean={}", report.rmsle_mean)?;
    writeln!(w, "# rmsle_mode={}", report.rmsle_mode)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::test_nets::*;
    use crate::choice::ChoiceParams;
    use crate::network::project_turns;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn chain_model(graph: &crate::network::TurnGraph, density: TimeDensity) -> Model<'_> {
        Model::build(
            graph,
            vec![1.3, 1.7],
            ChoiceParams::new([-2.0, -2.0, 0.0, 0.0, -5.0]),
            density,
            &[2],
        )
        .unwrap()
    }

    #[test]
    fn single_path_predictions_are_closed_form() {
        let net = chain3();
        let graph = project_turns(&net);
        let model = chain_model(&graph, TimeDensity::smsle(1.0).unwrap());
        let mut r = rng(1);
        let pred = predict(&model, 0, 2, 10, &mut r).unwrap();
        assert!(pred.exact);
        assert_eq!(pred.samples, 1);
        assert!((pred.geomean - 3.0).abs() < 1e-12);
        assert!((pred.mean - 3.0 * (0.25f64).exp()).abs() < 1e-12);
        // Log-normal mode; a single component's center is itself a knot.
        assert!((pred.mode - 3.0 * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn equal_weight_routes_give_the_geometric_mean() {
        // Zero time sensitivity makes both diamond routes equally likely;
        // times 1 and 4 have geometric mean 2.
        let net = diamond();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            vec![0.5, 2.0, 0.5, 2.0],
            ChoiceParams::new([0.0, 0.0, 0.0, 0.0, -5.0]),
            TimeDensity::smsle(1.0).unwrap(),
            &[3],
        )
        .unwrap();
        let mut r = rng(2);
        let v = predict_geomean(&model, 0, 3, 10, &mut r).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "geomean {v}");
    }

    #[test]
    fn two_route_mean_matches_the_logit_closed_form() {
        // Parallel routes with model times 2 and 1 under unit time
        // sensitivity: choice probability 1/(1+e), expected time 1+p.
        let net = parallel_pair();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            vec![2.0, 1.0],
            ChoiceParams::new([-1.0, -1.0, 0.0, 0.0, -5.0]),
            TimeDensity::Point,
            &[1],
        )
        .unwrap();
        let mut r = rng(3);
        let p = 1.0 / (1.0 + std::f64::consts::E);
        let mean = predict_mean(&model, 0, 1, 10, &mut r).unwrap();
        assert!((mean - (1.0 + p)).abs() < 1e-12, "mean {mean}");
        // Point density: mode is the heaviest route's time.
        let mode = predict_mode(&model, 0, 1, 10, &mut r).unwrap();
        assert_eq!(mode, 1.0);
        // Equal times collapse the mean to that time.
        let flat = Model::build(
            &graph,
            vec![1.0, 1.0],
            ChoiceParams::new([-1.0, -1.0, 0.0, 0.0, -5.0]),
            TimeDensity::Point,
            &[1],
        )
        .unwrap();
        assert!((predict_mean(&flat, 0, 1, 10, &mut r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_agrees_with_enumeration() {
        let net = diamond();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            vec![0.5, 2.0, 0.5, 2.0],
            ChoiceParams::new([-2.0, -2.0, 0.0, 0.0, -5.0]),
            TimeDensity::smsle(1.0).unwrap(),
            &[3],
        )
        .unwrap();
        let mut r = rng(4);
        let exact = predict(&model, 0, 3, 1, &mut r).unwrap();
        assert!(exact.exact);
        let k = 100_000;
        let sampled = predict_sampled(&model, 0, 3, k, &mut r).unwrap();
        assert!(!sampled.exact);
        assert_eq!(sampled.samples, k);
        // Compare log geomeans: the Monte Carlo log-mean has standard
        // error sd(ln t̂)/sqrt(K), computable exactly from enumeration.
        let p1 = {
            let ll = model.values().path_loglik(&[0, 2], 0, 3).unwrap();
            ll.exp()
        };
        let mu = p1 * 1.0f64.ln() + (1.0 - p1) * 4.0f64.ln();
        let var = p1 * (1.0f64.ln() - mu).powi(2) + (1.0 - p1) * (4.0f64.ln() - mu).powi(2);
        let se = (var / k as f64).sqrt();
        let diff = sampled.geomean.ln() - exact.geomean.ln();
        assert!(diff.abs() < 3.0 * se, "diff {diff}, se {se}");
        // The mean prediction should agree comparably.
        let var_t = p1 * (1.0 - (p1 * 1.0 + (1.0 - p1) * 4.0)).powi(2)
            + (1.0 - p1) * (4.0 - (p1 * 1.0 + (1.0 - p1) * 4.0)).powi(2);
        let se_t = (var_t / k as f64).sqrt() * model.density().mean_multiplier();
        assert!((sampled.mean - exact.mean).abs() < 3.0 * se_t);
    }

    #[test]
    fn separated_components_mode_is_the_taller_peak() {
        // Equal-weight routes at times 0.5 and 10: the log-normal around
        // the smaller time is taller, so the mixture peaks at its mode.
        let net = parallel_pair();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            vec![0.5, 10.0],
            ChoiceParams::new([0.0, 0.0, 0.0, 0.0, -5.0]),
            TimeDensity::smsle(4.0).unwrap(),
            &[1],
        )
        .unwrap();
        let mut r = rng(5);
        let mode = predict_mode(&model, 0, 1, 10, &mut r).unwrap();
        let expect = 0.5 * (-0.125f64).exp();
        assert!((mode - expect).abs() < 1e-9, "mode {mode}, expect {expect}");
    }

    #[test]
    fn geometric_mean_minimizes_squared_log_error() {
        // Weighted geometric mean against a log-space grid of rivals.
        let comps = [(1.0, 0.2), (2.0, 0.5), (5.0, 0.3)];
        let geo = geomean_of(&comps, TimeDensity::Point);
        let loss = |x: f64| {
            comps
                .iter()
                .map(|&(t, w)| w * (x / t).ln().powi(2))
                .sum::<f64>()
        };
        let at_geo = loss(geo);
        for i in 0..400 {
            let x = 0.2 * (1.02f64).powi(i);
            assert!(
                loss(x) >= at_geo - 1e-12,
                "x={x} beats the geometric mean"
            );
        }
    }

    #[test]
    fn rmsle_oracles() {
        assert_eq!(rmsle(&[(2.0, 2.0), (7.0, 7.0)]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let v = rmsle(&[(e * 3.0, 3.0), (e * 0.5, 0.5)]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = rmsle(&[(1.0, 2.0), (2.0, 1.0)]).unwrap();
        assert!((v - 2.0f64.ln()).abs() < 1e-12);
        assert!(rmsle(&[(0.0, 1.0)]).is_err());
        assert!(rmsle(&[(1.0, -2.0)]).is_err());
        assert!(rmsle(&[]).is_err());
    }

    #[test]
    fn report_is_order_invariant_and_complete() {
        let net = diamond();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            vec![0.5, 2.0, 0.5, 2.0],
            ChoiceParams::new([-2.0, -2.0, 0.0, 0.0, -5.0]),
            TimeDensity::smsle(1.0).unwrap(),
            &[1, 3],
        )
        .unwrap();
        let obs = vec![
            Observation::no_path(0, 3, 2.2),
            Observation::no_path(0, 1, 0.6),
            Observation::no_path(0, 3, 1.7),
        ];
        let report = evaluate(&model, &obs, 50, 11).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.n_observations, 3);
        let row_03 = report.rows.iter().find(|r| r.d == 3).unwrap();
        assert_eq!(row_03.n, 2);
        assert!((row_03.t_observed - (2.2f64 * 1.7).sqrt()).abs() < 1e-12);
        // Shuffling the observations changes nothing.
        let shuffled = vec![obs[2].clone(), obs[0].clone(), obs[1].clone()];
        let again = evaluate(&model, &shuffled, 50, 11).unwrap();
        assert_eq!(report, again);
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("o,d,n,"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert!(text.contains("# rmsle_geomean="));
        // Summary consistency: recompute from rows.
        let expect = ((2.0 * row_03.sqerr_geomean
            + report.rows.iter().find(|r| r.d == 1).unwrap().sqerr_geomean)
            / 3.0)
            .sqrt();
        assert!((report.rmsle_geomean - expect).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_timeless_data() {
        let net = chain3();
        let graph = project_turns(&net);
        let model = chain_model(&graph, TimeDensity::smsle(1.0).unwrap());
        let obs = vec![Observation::no_time(0, 2, vec![0, 1, 2])];
        assert!(evaluate(&model, &obs, 10, 0).is_err());
    }
}
