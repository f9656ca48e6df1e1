//! Exact kinetic Monte Carlo for the symmetric nearest-neighbour zero range
//! process on the discrete torus `𝕋_N^d`, `d ∈ {1, 2}`.
//!
//! Time is macroscopic: a particle leaves site `x` at rate `N² g(η(x))` per
//! neighbour, each of the `2d` neighbours having weight one. With this
//! normalization `run(…, T)` is directly comparable with the hydrodynamic
//! equation `∂t ρ = ΔΦ(ρ)` at time `T`.
//!
//! Random streams are `ChaCha8Rng::seed_from_u64(seed)` with the stream
//! index set to the replica number, see [`replica_rng`].

mod sumtree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::jump_rates::JumpRateSpec;
use crate::path::PathRecord;
use crate::stats;
use crate::thermo::Ensemble;

pub use sumtree::SumTree;

/// Cumulative mass beyond which marginal tables are cut and renormalized.
pub const PMF_CUT: f64 = 1e-12;

/// Random stream for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Occupation numbers on `𝕋_N^d`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Configuration {
    grid: Grid,
    eta: Vec<u32>,
    total: u64,
}

impl Configuration {
    pub fn new(grid: Grid, eta: Vec<u32>) -> Result<Self> {
        if eta.len() != grid.len() {
            return Err(Error::arg(format!("configuration has {} sites, lattice has {}", eta.len(), grid.len())));
        }
        let total = eta.iter().map(|&k| k as u64).sum();
        Ok(Configuration { grid, eta, total })
    }

    pub fn empty(grid: Grid) -> Self {
        Configuration { grid, eta: vec![0; grid.len()], total: 0 }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.side()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn eta(&self) -> &[u32] {
        &self.eta
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Site holding the particle with index `j` when particles are numbered
    /// site by site.
    fn site_of_particle(&self, j: u64) -> usize {
        let mut acc = 0u64;
        for (x, &k) in self.eta.iter().enumerate() {
            acc += k as u64;
            if j < acc {
                return x;
            }
        }
        unreachable!("particle index beyond total")
    }
}

/// What `run` keeps besides the final configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Record {
    None,
    Events,
    /// Configurations at `0, dt, 2dt, …` and at the final time.
    Snapshots(f64),
}

/// Jump events of one trajectory.
///
/// `rates[i]` is the total rate `Λ` in force during the waiting period that
/// ended with event `i`, so `rates[i]·(times[i] − times[i−1])` is `Exp(1)`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EventLog {
    pub times: Vec<f64>,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub rates: Vec<f64>,
    pub final_time: f64,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Waiting times scaled by the rate in force, i.i.d. `Exp(1)` for exact dynamics.
    pub fn normalized_gaps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .zip(&self.rates)
            .map(|(&t, &r)| {
                let g = r * (t - prev);
                prev = t;
                g
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub config: Configuration,
    pub events: Option<EventLog>,
    #[serde(skip)]
    pub snapshots: Option<PathRecord<Configuration>>,
    pub event_count: u64,
    pub final_time: f64,
    /// `(1/T)∫₀ᵀ N^{-d} Σ_x g(η_t(x)) dt`.
    pub mean_jump_rate_timeavg: f64,
}

/// Unwrapped lattice positions of one marked particle, recorded at the
/// times it moves.
#[derive(Debug, Clone, Serialize)]
pub struct TaggedTrack {
    pub initial_site: usize,
    pub times: Vec<f64>,
    pub positions: Vec<[i64; 2]>,
}

impl TaggedTrack {
    /// Unwrapped position at time `t`.
    pub fn position_at(&self, t: f64) -> [i64; 2] {
        let idx = self.times.partition_point(|&s| s <= t);
        self.positions[idx.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaggedEstimate {
    pub sigma_hat: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub samples: Vec<f64>,
}

/// Inverse-CDF sampler for a one-site marginal.
#[derive(Debug, Clone)]
struct Marginal {
    cdf: Vec<f64>,
}

impl Marginal {
    fn new(ens: &Ensemble, phi: f64) -> Result<Self> {
        let pmf = ens.marginal_pmf(phi, PMF_CUT)?;
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Marginal { cdf })
    }

    #[inline]
    fn sample(&self, u: f64) -> u32 {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u32
    }
}

fn fugacity(ens: &Ensemble, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("density must be finite and ≥ 0, got {rho}")));
    }
    let phi = ens.mean_jump_rate(rho)?;
    let phi_c = ens.spec().critical_fugacity();
    if phi >= phi_c {
        return Err(Error::OutOfDomain { phi, phi_c });
    }
    Ok(phi)
}

/// Product equilibrium of density `rho` on `𝕋_N^d`.
pub fn sample_equilibrium(ens: &Ensemble, rho: f64, side: usize, dim: usize, seed: u64) -> Result<Configuration> {
    sample_equilibrium_with(ens, rho, Grid::new(side, dim)?, &mut replica_rng(seed, 0))
}

pub fn sample_equilibrium_with<R: Rng + ?Sized>(ens: &Ensemble, rho: f64, grid: Grid, rng: &mut R) -> Result<Configuration> {
    let marginal = Marginal::new(ens, fugacity(ens, rho)?)?;
    let eta = (0..grid.len()).map(|_| marginal.sample(rng.random::<f64>())).collect();
    Configuration::new(grid, eta)
}

/// Product measure with slowly varying profile: site `x` is drawn with
/// fugacity `Φ(ρ₀(x/N))`, reading `ρ₀` at the cell containing the site centre.
pub fn sample_profile(ens: &Ensemble, rho0: &DensityField, side: usize, seed: u64) -> Result<Configuration> {
    sample_profile_with(ens, rho0, side, &mut replica_rng(seed, 0))
}

pub fn sample_profile_with<R: Rng + ?Sized>(ens: &Ensemble, rho0: &DensityField, side: usize, rng: &mut R) -> Result<Configuration> {
    let field_grid = rho0.grid();
    let grid = Grid::new(side, field_grid.dim())?;
    let values = rho0.values();
    let mut tables: Vec<Option<Marginal>> = vec![None; values.len()];
    let mut eta = Vec::with_capacity(grid.len());
    for x in 0..grid.len() {
        let cell = field_grid.locate(grid.centre(x));
        if tables[cell].is_none() {
            let rho = values[cell];
            // reuse the table of an identical earlier value
            let existing = (0..cell).find(|&c| values[c] == rho && tables[c].is_some());
            let m = match existing {
                Some(c) => tables[c].clone().unwrap(),
                None => Marginal::new(ens, fugacity(ens, rho)?)?,
            };
            tables[cell] = Some(m);
        }
        eta.push(tables[cell].as_ref().unwrap().sample(rng.random::<f64>()));
    }
    Configuration::new(grid, eta)
}

/// `g(k)` values, extended on demand.
struct RateCache<'a> {
    spec: &'a JumpRateSpec,
    values: Vec<f64>,
}

impl<'a> RateCache<'a> {
    fn new(spec: &'a JumpRateSpec) -> Self {
        RateCache { spec, values: vec![0.0] }
    }

    #[inline]
    fn get(&mut self, k: u32) -> Result<f64> {
        let k = k as usize;
        while self.values.len() <= k {
            let g = self.spec.evaluate(self.values.len() as u64)?;
            self.values.push(g);
        }
        Ok(self.values[k])
    }
}

struct Event {
    t: f64,
    from: usize,
    to: usize,
    lambda: f64,
}

/// Exact event-driven dynamics with incremental site rates.
struct Dynamics<'a> {
    grid: Grid,
    eta: Vec<u32>,
    total: u64,
    tree: SumTree,
    rates: RateCache<'a>,
    /// `N²·2d`
    scale: f64,
    t: f64,
    /// `∫ Σ_x g(η_t(x)) dt`
    rate_integral: f64,
}

impl<'a> Dynamics<'a> {
    fn new(ens: &'a Ensemble, config: Configuration) -> Result<Self> {
        let mut rates = RateCache::new(ens.spec());
        let weights = config.eta.iter().map(|&k| rates.get(k)).collect::<Result<Vec<f64>>>()?;
        let n = config.side() as f64;
        Ok(Dynamics {
            grid: config.grid,
            tree: SumTree::new(&weights),
            eta: config.eta,
            total: config.total,
            rates,
            scale: n * n * 2.0 * config.grid.dim() as f64,
            t: 0.0,
            rate_integral: 0.0,
        })
    }

    /// Performs the next event before `horizon`, or advances to `horizon`
    /// and returns `None`.
    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, horizon: f64) -> Result<Option<Event>> {
        let site_sum = self.tree.total();
        if site_sum <= 0.0 {
            self.t = horizon;
            return Ok(None);
        }
        let lambda = self.scale * site_sum;
        let wait: f64 = rng.sample::<f64, _>(Exp1) / lambda;
        if self.t + wait >= horizon {
            self.rate_integral += site_sum * (horizon - self.t);
            self.t = horizon;
            return Ok(None);
        }
        self.rate_integral += site_sum * wait;
        self.t += wait;
        let from = self.tree.find(rng.random::<f64>() * site_sum);
        let dir = rng.random_range(0..2 * self.grid.dim());
        let to = self.grid.neighbour(from, dir);
        self.eta[from] -= 1;
        self.eta[to] += 1;
        let gf = self.rates.get(self.eta[from])?;
        let gt = self.rates.get(self.eta[to])?;
        self.tree.set(from, gf);
        self.tree.set(to, gt);
        Ok(Some(Event { t: self.t, from, to, lambda }))
    }

    fn configuration(&self) -> Configuration {
        Configuration { grid: self.grid, eta: self.eta.clone(), total: self.total }
    }

    fn into_configuration(self) -> Configuration {
        Configuration { grid: self.grid, eta: self.eta, total: self.total }
    }
}

/// Runs the process from `config` up to macroscopic time `horizon`.
pub fn run(ens: &Ensemble, config: Configuration, horizon: f64, seed: u64, record: Record) -> Result<RunOutput> {
    run_with(ens, config, horizon, &mut replica_rng(seed, 0), record)
}

pub fn run_with<R: Rng + ?Sized>(
    ens: &Ensemble,
    config: Configuration,
    horizon: f64,
    rng: &mut R,
    record: Record,
) -> Result<RunOutput> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::arg(format!("final time must be finite and > 0, got {horizon}")));
    }
    if let Record::Snapshots(dt) = record {
        if !(dt > 0.0) {
            return Err(Error::arg(format!("snapshot interval must be > 0, got {dt}")));
        }
    }
    let sites = config.grid.len() as f64;
    let mut dynamics = Dynamics::new(ens, config)?;
    let mut events = matches!(record, Record::Events).then(EventLog::default);
    let mut snapshots = None;
    let mut count = 0u64;
    match record {
        Record::Snapshots(dt) => {
            let mut path = PathRecord::new();
            path.push(0.0, dynamics.configuration());
            let mut k = 1u64;
            loop {
                let target = (k as f64 * dt).min(horizon);
                while dynamics.step(rng, target)?.is_some() {
                    count += 1;
                }
                path.push(target, dynamics.configuration());
                if target >= horizon || horizon - target <= 1e-12 * horizon {
                    break;
                }
                k += 1;
            }
            snapshots = Some(path);
        }
        _ => {
            while let Some(ev) = dynamics.step(rng, horizon)? {
                count += 1;
                if let Some(log) = events.as_mut() {
                    log.times.push(ev.t);
                    log.from.push(ev.from);
                    log.to.push(ev.to);
                    log.rates.push(ev.lambda);
                }
            }
        }
    }
    if let Some(log) = events.as_mut() {
        log.final_time = horizon;
    }
    let avg = dynamics.rate_integral / (horizon * sites);
    Ok(RunOutput {
        config: dynamics.into_configuration(),
        events,
        snapshots,
        event_count: count,
        final_time: horizon,
        mean_jump_rate_timeavg: avg,
    })
}

/// Block averages on an `M^d` grid: cell value `(M/N)^d · (block count)`.
pub fn empirical_density(config: &Configuration, m: usize) -> Result<DensityField> {
    let n = config.side();
    if m == 0 || n % m != 0 {
        return Err(Error::arg(format!("block grid {m} must divide lattice side {n}")));
    }
    let grid = Grid::new(m, config.dim())?;
    let b = n / m;
    let mut counts = vec![0u64; grid.len()];
    for (x, &k) in config.eta.iter().enumerate() {
        let c = config.grid.coords(x);
        let cell = if config.dim() == 1 { c[0] / b } else { c[0] / b + m * (c[1] / b) };
        counts[cell] += k as u64;
    }
    let factor = (m as f64 / n as f64).powi(config.dim() as i32);
    DensityField::new(grid, counts.into_iter().map(|c| c as f64 * factor).collect())
}

/// Follows one uniformly chosen particle of `config` up to `horizon`.
///
/// When the departing site holds the tagged particle among `η(x)`
/// exchangeable particles, the tagged one is the mover with probability
/// `1/η(x)`.
pub fn tagged_track_with<R: Rng + ?Sized>(
    ens: &Ensemble,
    config: Configuration,
    horizon: f64,
    rng: &mut R,
) -> Result<(Configuration, TaggedTrack)> {
    if config.total == 0 {
        return Err(Error::arg("cannot tag a particle in an empty configuration"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::arg(format!("final time must be finite and > 0, got {horizon}")));
    }
    let start = config.site_of_particle(rng.random_range(0..config.total));
    let grid = config.grid;
    let mut dynamics = Dynamics::new(ens, config)?;
    let mut site = start;
    let mut pos = [0i64; 2];
    let mut track = TaggedTrack { initial_site: start, times: vec![0.0], positions: vec![pos] };
    while let Some(ev) = dynamics.step(rng, horizon)? {
        if ev.from != site {
            continue;
        }
        let before = dynamics.eta[ev.from] + 1;
        if before > 1 && rng.random_range(0..before) != 0 {
            continue;
        }
        let axis = (0..grid.dim()).find(|&a| grid.forward(site, a) == ev.to || grid.backward(site, a) == ev.to).unwrap();
        // side 2 makes forward and backward coincide; either sign is a unit step
        pos[axis] += if grid.forward(site, axis) == ev.to { 1 } else { -1 };
        site = ev.to;
        track.times.push(ev.t);
        track.positions.push(pos);
    }
    Ok((dynamics.into_configuration(), track))
}

/// Self-diffusivity from the tagged-particle displacement over `[T/2, T]`:
/// `σ̂ = |X(T) − X(T/2)|² / (2d · T/2)` in macroscopic units, averaged over
/// replicas started from the equilibrium of density `rho`.
pub fn tagged_run(ens: &Ensemble, rho: f64, side: usize, dim: usize, horizon: f64, seed: u64, replicas: usize) -> Result<TaggedEstimate> {
    if !(rho > 0.0) {
        return Err(Error::arg(format!("tagged run needs ρ > 0, got {rho}")));
    }
    if replicas < 2 {
        return Err(Error::arg("tagged run needs at least two replicas"));
    }
    let grid = Grid::new(side, dim)?;
    let samples = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = replica_rng(seed, r);
            // condition on at least one particle being present
            let mut config = sample_equilibrium_with(ens, rho, grid, &mut rng)?;
            let mut attempts = 0;
            while config.total == 0 {
                attempts += 1;
                if attempts > 10_000 {
                    return Err(Error::arg(format!("equilibrium at ρ={rho} on {side}^{dim} sites is almost surely empty")));
                }
                config = sample_equilibrium_with(ens, rho, grid, &mut rng)?;
            }
            let (_, track) = tagged_track_with(ens, config, horizon, &mut rng)?;
            let a = track.position_at(0.5 * horizon);
            let b = track.position_at(horizon);
            let h = 1.0 / side as f64;
            let sq: f64 = (0..dim).map(|i| ((b[i] - a[i]) as f64 * h).powi(2)).sum();
            Ok(sq / (2.0 * dim as f64 * 0.5 * horizon))
        })
        .collect::<Result<Vec<f64>>>()?;
    let est = stats::mean_stderr(&samples);
    Ok(TaggedEstimate { sigma_hat: est.mean, stderr: est.stderr, replicas, samples })
}
