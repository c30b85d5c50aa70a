//! One function per subcommand. Each only composes library calls and
//! collects the artifacts; nothing is written until the run has finished.

use serde::Serialize;
use serde_json::{json, Value};
use vasiplab::cone::{check_cone_invariance, cone_decompose, ConeGrid, PowerSum};
use vasiplab::decay::{check_decay, DecayRequest};
use vasiplab::gauss::{bp_series_check, embed_matching_error, split_covariance};
use vasiplab::maps::MapSchedule;
use vasiplab::observable::Observable;
use vasiplab::orbit::{iterate_orbit, sample_ensemble, Ensemble};
use vasiplab::params::{check_constraint_chain, clt_gamma1, vasip_gamma};
use vasiplab::quenched::{quasi_invariant_density, quenched_stats, Driver, QuenchedRequest};
use vasiplab::stats::{
    birkhoff_sums, block_plan, check_lemma_scaling, covariance_split, covariance_trace, green_kubo, lil_band,
    self_norming_clt, SumPaths, TimeMeans,
};
use vasiplab::fit::geometric_checkpoints;
use vasiplab::ulam::{OperatorCache, Pushforward, UlamOperator};

use crate::config::{block, Centering, ExperimentConfig, ParamsConfig};

/// Files to write, in order, and whether the run's checks passed.
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn new(name: &str, pass: bool, report: &impl Serialize) -> Self {
        let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
        text.push('\n');
        Outcome { pass, files: vec![(format!("{name}.json"), text)] }
    }

    fn csv(mut self, name: &str, body: String) -> Self {
        self.files.push((name.to_string(), body));
        self
    }
}

type Run = Result<Outcome, String>;

fn lib<T>(r: vasiplab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rows<I: IntoIterator<Item = String>>(header: &str, lines: I) -> String {
    let mut s = format!("{header}\n");
    for l in lines {
        s.push_str(&l);
        s.push('\n');
    }
    s
}

pub fn simulate(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.simulate, "simulate")?;
    let s = cfg.schedule()?;
    if let Some(x0) = b.x0 {
        let o = lib(iterate_orbit(&s, x0, b.n))?;
        let report = json!({ "x0": x0, "n": b.n, "orbits": 1 });
        return Ok(Outcome::new("simulate", true, &report).csv("orbits.csv", o.to_csv()));
    }
    let ens = lib(sample_ensemble(&s, b.orbits, b.n, cfg.seed))?;
    let lines = ens.orbits().enumerate().flat_map(|(i, o)| {
        std::iter::once(format!("{i},0,{}", o.x0))
            .chain(o.points.into_iter().enumerate().map(move |(k, x)| format!("{i},{},{x}", k + 1)))
    });
    let report = json!({ "orbits": b.orbits, "n": b.n, "seed": cfg.seed });
    Ok(Outcome::new("simulate", true, &report).csv("orbits.csv", rows("orbit,k,x", lines)))
}

pub fn ulam(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.ulam, "ulam")?;
    let s = cfg.schedule()?;
    let (density, iterations, converged) = if b.steps == 0 {
        let p = s.stationary().ok_or("ulam: steps = 0 needs a constant schedule")?;
        let op = lib(UlamOperator::new(&p, b.n_bins))?;
        let (h, it) = op.fixed_density(b.tol, b.max_iter);
        (h, it, it < b.max_iter)
    } else {
        let cache = lib(OperatorCache::new(b.n_bins))?;
        let mut pf = Pushforward::new(&s, &cache);
        pf.advance_to(b.steps as i64);
        (lib(vasiplab::ulam::DensityGrid::new(pf.density().to_vec()))?, b.steps, true)
    };
    let gk = match b.green_kubo_terms {
        None => None,
        Some(n_terms) => {
            let p = s.stationary().ok_or("ulam: Green-Kubo needs a constant schedule")?;
            Some(lib(green_kubo(&cfg.observable()?, &p, n_terms, b.n_bins))?)
        }
    };
    let report = json!({
        "n_bins": b.n_bins,
        "steps": b.steps,
        "iterations": iterations,
        "converged": converged,
        "integral": density.integral(),
        "green_kubo": gk,
    });
    Ok(Outcome::new("ulam", converged, &report).csv("density.csv", density.to_csv()))
}

pub fn decay(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.decay, "decay")?;
    let req = DecayRequest {
        kind: b.kind,
        i: b.i,
        j: b.j,
        n_min: b.n_min,
        n_max: b.n_max,
        n_bins: b.n_bins,
        slack: b.slack,
    };
    let r = lib(check_decay(&cfg.schedule()?, &cfg.observable()?, &req))?;
    let corr = |n: usize| r.correlations.iter().find(|c| c.0 == n).map_or(String::new(), |c| c.1.to_string());
    let csv = rows("n,norm,correlation", r.points.iter().map(|&(n, v)| format!("{n},{v},{}", corr(n))));
    Ok(Outcome::new("decay", r.pass, &r).csv("decay.csv", csv))
}

#[derive(Serialize)]
struct ConeReport {
    decomposition: vasiplab::cone::Decomposition,
    invariance: Option<vasiplab::cone::InvarianceReport>,
}

pub fn cone(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.cone, "cone")?;
    let spec = lib(b.spec())?;
    let phi = cfg.observable()?;
    let grid = match &b.grid {
        None => ConeGrid::default(),
        Some(g) => lib(ConeGrid::new(g.x_min, g.split, g.n_log, g.n_uniform))?,
    };
    let h = vec![1.0; grid.len()];
    let lipschitz = b.lipschitz.unwrap_or_else(|| phi.lipschitz_bound());
    let d = lib(cone_decompose(&phi, &h, &grid, &spec, lipschitz, b.l1_bound))?;
    let invariance = match &b.invariance {
        None => None,
        Some(inv) => {
            let p = cfg.schedule()?.stationary().ok_or("cone: invariance needs a constant schedule")?;
            let samples = PowerSum::family(spec.alpha, inv.samples);
            Some(lib(check_cone_invariance(&p, &spec, &samples, inv.n_bins, inv.margin_floor))?)
        }
    };
    let csv = rows(
        "x,weight,h1,h2",
        (0..grid.len()).map(|i| format!("{},{},{},{}", grid.points()[i], grid.weights()[i], d.h1[i], d.h2[i])),
    );
    let pass = d.first.member && d.second.member && invariance.as_ref().is_none_or(|r| r.pass);
    let mut out = Outcome::new("cone", pass, &ConeReport { decomposition: d, invariance: invariance.clone() })
        .csv("cone.csv", csv);
    if let Some(r) = invariance {
        out = out.csv("invariance.csv", rows("sample,margin", r.sample_margins.iter().enumerate().map(|(i, m)| format!("{i},{m}"))));
    }
    Ok(out)
}

pub fn blocks(cfg: &ExperimentConfig, overrides: &ParamsOverrides) -> Run {
    let b = block(&cfg.blocks, "blocks")?;
    let (c, a) = match (b.c, b.a) {
        (Some(c), Some(a)) => (c, a),
        (None, None) => {
            let alpha = overrides.alpha.or(b.alpha).ok_or("blocks: give either `c` and `a`, or `alpha`")?;
            let p = lib(vasip_gamma(alpha, overrides.d.unwrap_or(b.d), overrides.margin.unwrap_or(b.margin)))?;
            (p.c, p.a)
        }
        _ => return Err("blocks: `c` and `a` go together".into()),
    };
    let plan = lib(block_plan(c, a, b.horizon))?;
    let verified = plan.verify();
    let last = plan.blocks.last().map(|bl| bl.end().to_string());
    let report = json!({
        "c": c,
        "a": a,
        "horizon": b.horizon,
        "last_index": last,
        "verified": verified.is_ok(),
        "violation": verified.as_ref().err(),
    });
    Ok(Outcome::new("blocks", verified.is_ok(), &report).csv("blocks.csv", plan.to_csv(b.max_subblocks)))
}

/// Birkhoff sums along `s` at `checkpoints`, centered as requested.
fn sums(
    s: &MapSchedule,
    phi: &Observable,
    checkpoints: &[usize],
    orbits: usize,
    seed: u64,
    center: Centering,
) -> Result<SumPaths, String> {
    let n = *checkpoints.last().ok_or("no checkpoints")?;
    let ens = Ensemble::new(s, orbits, n, seed);
    let means = match center {
        Centering::Ulam { n_bins } => Some(lib(TimeMeans::ulam(s, phi, n, n_bins))?),
        Centering::Ensemble => Some(lib(TimeMeans::ensemble(&ens, phi, n))?),
        Centering::None => None,
    };
    lib(birkhoff_sums(&ens, phi, checkpoints, means.as_ref()))
}

pub fn clt(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.clt, "clt")?;
    let paths = sums(&cfg.schedule()?, &cfg.observable()?, &b.checkpoints, b.orbits, cfg.seed, b.center)?;
    let trace = lib(covariance_trace(&paths))?;
    let n = b.n.or(b.checkpoints.last().copied()).ok_or("no checkpoints")?;
    let r = lib(self_norming_clt(&paths, &trace, n, &b.options))?;
    Ok(Outcome::new("clt", r.pass, &r).csv("covariance.csv", trace.to_csv()))
}

pub fn lil(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.lil, "lil")?;
    if b.n_min == 0 || b.n_max < b.n_min || !(b.rho > 1.0) {
        return Err("lil: need 1 <= n_min <= n_max and rho > 1".into());
    }
    let cps = geometric_checkpoints(b.n_min, b.n_max, b.rho);
    let paths = sums(&cfg.schedule()?, &cfg.observable()?, &cps, b.orbits, cfg.seed, b.center)?;
    let trace = lib(covariance_trace(&paths))?;
    let r = lib(lil_band(&paths, &trace, &b.options))?;
    Ok(Outcome::new("lil", r.pass, &r).csv("covariance.csv", trace.to_csv()))
}

pub fn lemmas(cfg: &ExperimentConfig) -> Run {
    let mut req = block(&cfg.lemmas, "lemmas")?.clone();
    // One seed per experiment: the top-level one.
    req.seed = cfg.seed;
    let r = lib(check_lemma_scaling(&cfg.schedule()?, &cfg.observable()?, &req))?;
    let csv = rows("n,value", r.points.iter().map(|(n, v)| format!("{n},{v}")));
    Ok(Outcome::new("lemmas", r.pass, &r).csv("lemmas.csv", csv))
}

#[derive(Serialize)]
struct EmbedOutput {
    embedding: vasiplab::gauss::EmbedReport,
    series: Option<vasiplab::gauss::BpSeriesReport>,
}

pub fn embed(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.embed, "embed")?;
    let model = &b.model;
    let r = lib(embed_matching_error(|k| model.at(k), model.dim(), b.c, b.blocks, b.replicas, cfg.seed))?;
    let series = match &b.series {
        None => None,
        Some(s) => Some(lib(bp_series_check(s.kappa, s.v, s.d, s.horizon, s.tail_variance_exponent))?),
    };
    let pass = r.pass && series.as_ref().is_none_or(|s| s.convergent);
    let csv = rows(
        "time,rms_error,first_replica",
        (0..r.times.len()).map(|i| format!("{},{},{}", r.times[i], r.rms_error[i], r.first_replica[i])),
    );
    let mut out = Outcome::new("embed", pass, &EmbedOutput { embedding: r, series: series.clone() }).csv("embed.csv", csv);
    if let Some(s) = series {
        out = out.csv("series.csv", rows("n,partial_sum", s.partial_sums.iter().map(|(n, v)| format!("{n},{v}"))));
    }
    Ok(out)
}

/// `--alpha`, `--d` and `--margin` from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct ParamsOverrides {
    pub alpha: Option<f64>,
    pub d: Option<usize>,
    pub margin: Option<f64>,
}

pub fn params(cfg: &ExperimentConfig, o: &ParamsOverrides) -> Run {
    let base = cfg.params.as_ref();
    let pick = ParamsConfig {
        alpha: o.alpha.or(base.map(|b| b.alpha)).ok_or("params: give --alpha or a `params` block")?,
        d: o.d.or(base.map(|b| b.d)).unwrap_or(1),
        margin: o.margin.or(base.map(|b| b.margin)).unwrap_or(1e-4),
    };
    let p = lib(vasip_gamma(pick.alpha, pick.d, pick.margin))?;
    let chain = check_constraint_chain(&p);
    let gamma1 = lib(clt_gamma1(pick.alpha))?;
    let csv = rows(
        "name,slack,status",
        chain.constraints.iter().chain(&chain.intermediate).map(|c| {
            let status = serde_json::to_value(c.status).expect("status serializes");
            format!("{},{},{}", c.name, c.slack, status.as_str().unwrap_or_default())
        }),
    );
    let pass = chain.all_hold;
    let report = json!({ "params": p, "constraints": chain, "clt_gamma1": gamma1 });
    Ok(Outcome::new("params", pass, &report).csv("constraints.csv", csv))
}

pub fn quenched(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.quenched, "quenched")?;
    let driver = lib(Driver::new(&b.driver, b.alpha_max, b.driver_seed))?;
    let req = QuenchedRequest {
        omegas: b.omegas.clone(),
        checkpoints: b.checkpoints.clone(),
        orbits: b.orbits,
        seed: cfg.seed,
        n_iter: b.n_iter,
        n_bins: b.n_bins,
    };
    let r = lib(quenched_stats(&driver, &cfg.observable()?, &req))?;
    let cache = lib(OperatorCache::new(b.n_bins))?;
    let mut densities = String::from("omega,i,x,density\n");
    for &omega in &b.omegas {
        let h = lib(quasi_invariant_density(&driver, omega, b.n_iter, &cache, f64::INFINITY))?;
        densities.extend(h.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    let rates = rows(
        "omega,row,col,rate,rate_se,split_dim",
        r.fibers.iter().flat_map(|f| {
            (0..f.rate.len()).flat_map(move |i| {
                (0..f.rate.len()).map(move |j| format!("{},{i},{j},{},{},{}", f.omega, f.rate[i][j], f.rate_se[i][j], f.split_dim))
            })
        }),
    );
    Ok(Outcome::new("quenched", r.pass, &r).csv("densities.csv", densities).csv("rates.csv", rates))
}

pub fn split(cfg: &ExperimentConfig) -> Run {
    let b = block(&cfg.split, "split")?;
    let s = lib(covariance_split(&b.matrix, b.zero_tol.unwrap_or_default()))?;
    let cov = match b.t {
        None => None,
        Some(t) => Some(lib(split_covariance(&b.matrix, t))?),
    };
    let csv = rows(
        "i,eigenvalue,subspace",
        s.eigenvalues.iter().enumerate().map(|(i, v)| {
            let w = if i < s.w2.len() { "w2" } else { "w1" };
            format!("{i},{v},{w}")
        }),
    );
    let report: Value = json!({ "split": s, "covariance_split": cov });
    Ok(Outcome::new("split", true, &report).csv("split.csv", csv))
}
