//! Config-driven experiments on random unit-demand markets: UM-loss of
//! learned equilibria (EA) and sample savings of EAP over EA.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learning::{
    ea, eap, invert_hoeffding_t, BoundMode, Budget, EapConfig, MarketStructure, Schedules,
};
use crate::market::{Bundle, IndexSet, Outcome};
use crate::metrics::{sample_efficiency, um_loss};
use crate::pricing::{linear_ce_prices_unit_demand, PriceObjective};
use crate::valuation::{gen_unit_demand, Distribution, NoiseSpec, NoisyOracle, UnitDemandMatrix, MAX_UNIT_VALUE};
use crate::welfare::max_welfare_unit_demand;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub distributions: Vec<Distribution>,
    pub buyers: Vec<usize>,
    pub goods: Vec<usize>,
    pub noise_half_width: f64,
    pub eps: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    pub bound_mode: BoundMode,
    pub total_delta: f64,
    /// Worker threads; 0 lets rayon decide. Never affects results.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            distributions: Distribution::ALL.to_vec(),
            buyers: vec![5, 10],
            goods: vec![5, 10],
            noise_half_width: 1.0,
            eps: vec![0.05, 0.1, 0.15, 0.2],
            draws: 20,
            seed: 0,
            bound_mode: BoundMode::Exact,
            total_delta: 0.1,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    /// The 4 x 4 grid with 50 draws per cell.
    pub fn full() -> Self {
        ExperimentConfig {
            buyers: vec![5, 10, 15, 20],
            goods: vec![5, 10, 15, 20],
            draws: 50,
            ..Default::default()
        }
    }

    /// `c`: the largest value plus the noise half-width.
    pub fn value_range(&self) -> f64 {
        MAX_UNIT_VALUE + self.noise_half_width
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.distributions.is_empty() || self.buyers.is_empty() || self.goods.is_empty() || self.eps.is_empty() {
            return fail("distributions, buyers, goods and eps must all be nonempty".into());
        }
        if self.draws == 0 {
            return fail("draws must be positive".into());
        }
        if self.buyers.contains(&0) || self.goods.contains(&0) {
            return fail("market sizes must be positive".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return fail(format!("eps {e} must be positive"));
        }
        if !(self.total_delta > 0.0 && self.total_delta < 1.0) {
            return fail(format!("total_delta {} must lie in (0, 1)", self.total_delta));
        }
        NoiseSpec::uniform(self.noise_half_width).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (d, &dist) in self.distributions.iter().enumerate() {
            for &n in &self.buyers {
                for &m in &self.goods {
                    if !dist.supports(n, m) {
                        log::info!("skipping {dist} with {n} buyers and {m} goods");
                        continue;
                    }
                    for draw in 0..self.draws {
                        cells.push(Cell { dist_index: d, dist, n, m, draw });
                    }
                }
            }
        }
        cells
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    dist_index: usize,
    dist: Distribution,
    n: usize,
    m: usize,
    draw: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Cell {
    fn seed(&self, master: u64, stream: u64) -> u64 {
        [self.dist_index as u64, self.n as u64, self.m as u64, self.draw as u64, stream]
            .iter()
            .fold(splitmix(master), |acc, &x| splitmix(acc ^ x))
    }
}

/// `[t/4, t/2, t, 2t]` around `t = t(eps)`, with `total_delta` split evenly
/// and no pruning cap.
pub fn build_doubling_schedule(eps: f64, c: f64, idx_size: usize, total_delta: f64) -> Result<Schedules> {
    let t = invert_hoeffding_t(c, idx_size, total_delta, eps)?;
    let mut sampling = Vec::with_capacity(4);
    for factor in [0.25, 0.5, 1.0, 2.0] {
        let rounded = (t as f64 * factor).round() as u64;
        // tiny t would otherwise repeat entries
        let floor = sampling.last().map_or(1, |&p: &u64| p + 1);
        sampling.push(rounded.max(floor));
    }
    Schedules::new(sampling, vec![total_delta / 4.0; 4], vec![Budget::Unbounded; 4])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub distribution: Distribution,
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub draw: usize,
    pub objective: PriceObjective,
    pub um_loss: f64,
    pub ea_samples: u64,
    pub eap_samples: Option<u64>,
    pub savings: Option<f64>,
    pub eps_achieved: f64,
}

/// Minimum- and maximum-revenue CE of `v_hat`, scored in `truth`.
fn learned_ce_losses(truth: &UnitDemandMatrix, v_hat: &UnitDemandMatrix) -> Result<[(PriceObjective, f64); 2]> {
    let alloc = max_welfare_unit_demand(v_hat).allocation;
    let mut out = [(PriceObjective::MinRevenue, 0.0), (PriceObjective::MaxRevenue, 0.0)];
    for (objective, loss) in out.iter_mut() {
        let sol = linear_ce_prices_unit_demand(v_hat, &alloc, *objective)?;
        *loss = um_loss(truth, &Outcome::new(alloc.clone(), sol.pricing())?);
    }
    Ok(out)
}

fn table1_cell(config: &ExperimentConfig, cell: Cell) -> Result<Vec<ResultRow>> {
    let Cell { dist, n, m, draw, .. } = cell;
    let truth = gen_unit_demand(dist, n, m, cell.seed(config.seed, 0))?;
    let noise = NoiseSpec::uniform(config.noise_half_width)?;
    let c = config.value_range();
    let idx = IndexSet::singletons(n, m);
    let mut rows = Vec::new();
    for (e, &eps) in config.eps.iter().enumerate() {
        let mut oracle = NoisyOracle::new(truth.clone(), noise, cell.seed(config.seed, 1 + e as u64), c)?;
        let t = invert_hoeffding_t(c, idx.len(), config.total_delta, eps)?;
        let out = ea(&mut oracle, &idx, t, config.total_delta)?;
        let v_hat = estimates_matrix(n, m, &out.estimates)?;
        for (objective, loss) in learned_ce_losses(&truth, &v_hat)? {
            rows.push(ResultRow {
                distribution: dist,
                n,
                m,
                eps,
                draw,
                objective,
                um_loss: loss,
                ea_samples: t * idx.len() as u64,
                eap_samples: None,
                savings: None,
                eps_achieved: out.eps_hat,
            });
        }
    }
    Ok(rows)
}

fn estimates_matrix(n: usize, m: usize, estimates: &[((usize, Bundle), f64)]) -> Result<UnitDemandMatrix> {
    let mut values = vec![0.0; n * m];
    for &((i, s), mean) in estimates {
        if let Some(j) = s.goods().next() {
            values[i * m + j] = mean.max(0.0);
        }
    }
    UnitDemandMatrix::new(n, m, values)
}

fn efficiency_cell(config: &ExperimentConfig, cell: Cell) -> Result<Vec<ResultRow>> {
    let Cell { dist, n, m, draw, .. } = cell;
    let truth = gen_unit_demand(dist, n, m, cell.seed(config.seed, 0))?;
    let noise = NoiseSpec::uniform(config.noise_half_width)?;
    let c = config.value_range();
    let idx_size = n * m;
    let mut rows = Vec::new();
    for (e, &eps) in config.eps.iter().enumerate() {
        let mut oracle = NoisyOracle::new(truth.clone(), noise, cell.seed(config.seed, 1 + e as u64), c)?;
        let eap_config = EapConfig {
            schedules: build_doubling_schedule(eps, c, idx_size, config.total_delta)?,
            target_eps: 0.0,
            bound_mode: config.bound_mode,
            structure: MarketStructure::UnitDemand,
        };
        let learned = eap(&mut oracle, &eap_config)?;
        let ea_samples = idx_size as u64 * invert_hoeffding_t(c, idx_size, config.total_delta, learned.eps_hat)?;
        let v_hat = learned.estimates.empirical_unit_demand(n, m)?;
        let [(objective, loss), _] = learned_ce_losses(&truth, &v_hat)?;
        rows.push(ResultRow {
            distribution: dist,
            n,
            m,
            eps,
            draw,
            objective,
            um_loss: loss,
            ea_samples,
            eap_samples: Some(learned.total_samples),
            savings: Some(sample_efficiency(ea_samples, learned.total_samples)?),
            eps_achieved: learned.eps_hat,
        });
    }
    Ok(rows)
}

fn run_cells<F>(config: &ExperimentConfig, job: F) -> Result<Vec<ResultRow>>
where
    F: Fn(&ExperimentConfig, Cell) -> Result<Vec<ResultRow>> + Sync,
{
    config.validate()?;
    let cells = config.cells();
    let per_cell: Vec<Result<Vec<ResultRow>>> =
        config.pool()?.install(|| cells.par_iter().map(|&cell| job(config, cell)).collect());
    let mut rows = Vec::new();
    for r in per_cell {
        rows.extend(r?);
    }
    Ok(rows)
}

/// One row per (draw, eps, objective): EA to each eps, then both extreme CE
/// prices of the learned market, scored in the true market.
pub fn run_table1_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_cells(config, table1_cell)
}

/// One row per (draw, eps): EAP with the doubling schedule against EA at the
/// radius EAP reached.
pub fn run_sample_efficiency_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_cells(config, efficiency_cell)
}

/// Mean savings over draws, one grid per distribution and eps.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub distribution: Distribution,
    pub eps: f64,
    pub buyers: Vec<usize>,
    pub goods: Vec<usize>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn file_name(&self) -> String {
        format!("heatmap_{}_eps{}.csv", self.distribution.name(), self.eps)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n\\m");
        for m in &self.goods {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
        for (n, row) in self.buyers.iter().zip(&self.cells) {
            out.push_str(&n.to_string());
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn heatmaps(config: &ExperimentConfig, rows: &[ResultRow]) -> Vec<Heatmap> {
    let mut maps = Vec::new();
    for &distribution in &config.distributions {
        for &eps in &config.eps {
            let cells = config
                .buyers
                .iter()
                .map(|&n| {
                    config
                        .goods
                        .iter()
                        .map(|&m| {
                            let s: Vec<f64> = rows
                                .iter()
                                .filter(|r| r.distribution == distribution && r.eps == eps && r.n == n && r.m == m)
                                .filter_map(|r| r.savings)
                                .collect();
                            (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
                        })
                        .collect()
                })
                .collect();
            maps.push(Heatmap { distribution, eps, buyers: config.buyers.clone(), goods: config.goods.clone(), cells });
        }
    }
    maps
}

/// Mean UM-loss per (distribution, n, m, eps, objective), in row order of first appearance.
pub fn summarize_losses(rows: &[ResultRow]) -> Vec<(Distribution, usize, usize, f64, PriceObjective, f64)> {
    type Key = (Distribution, usize, usize, f64, PriceObjective);
    let mut groups: Vec<(Key, f64, usize)> = Vec::new();
    for r in rows {
        let key = (r.distribution, r.n, r.m, r.eps, r.objective);
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                g.1 += r.um_loss;
                g.2 += 1;
            }
            None => groups.push((key, r.um_loss, 1)),
        }
    }
    groups
        .into_iter()
        .map(|((d, n, m, eps, obj), sum, count)| (d, n, m, eps, obj, sum / count as f64))
        .collect()
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn summary_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("distribution,n,m,eps,objective,mean_um_loss\n");
    for (d, n, m, eps, obj, mean) in summarize_losses(rows) {
        out.push_str(&format!("{},{n},{m},{eps},{},{mean}\n", d.name(), obj.name()));
    }
    out
}

/// Git's blob id scheme over SHA-256: `sha256("blob <len>\0" + content)`.
pub fn content_hash(content: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", content.len()).as_bytes());
    hasher.update(content);
    hex::encode(hasher.finalize())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Table1,
    Heatmap,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub files: Vec<ManifestEntry>,
    pub wall_time_secs: f64,
}

/// Runs an experiment and writes its CSVs plus `manifest.json` into `out_dir`.
pub fn run_and_write(kind: ExperimentKind, config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    let (rows, mut files) = match kind {
        ExperimentKind::Table1 => {
            let rows = run_table1_experiment(config)?;
            let files = vec![
                ("table1.csv".to_string(), rows_to_csv(&rows)?),
                ("table1_summary.csv".to_string(), summary_to_csv(&rows)),
            ];
            (rows, files)
        }
        ExperimentKind::Heatmap => {
            let rows = run_sample_efficiency_experiment(config)?;
            let mut files = vec![("sample_efficiency.csv".to_string(), rows_to_csv(&rows)?)];
            files.extend(heatmaps(config, &rows).iter().map(|h| (h.file_name(), h.to_csv())));
            (rows, files)
        }
    };
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    for (name, content) in files.drain(..) {
        let path: PathBuf = out_dir.join(&name);
        fs::write(&path, &content)?;
        entries.push(ManifestEntry { file: name, hash: content_hash(content.as_bytes()) });
    }
    let manifest = Manifest {
        experiment: kind,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        rows: rows.len(),
        files: entries,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
