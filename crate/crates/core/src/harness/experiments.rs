use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{classify, decisions_to_csv, ClassifierConfig, Decision};
use crate::clonal::{clonalg_run, ClonalSelection, ClonalgOutcome, ClonalgParams, CloneConfig, PoolSet};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::harness::report::write_file;
use crate::harness::{ExperimentConfig, SweepResult, Variant};
use crate::mnist::{batches, stratified_subset, Dataset, Split};
use crate::nn::{error_rate, forward_features, init_params, predict, train, Architecture, ClonalHook, LayerStack, TrainConfig};
use crate::tensor::Tensor;

/// Seed of the fixed evaluation subset; shared by every run so that all
/// variants, sizes and seeds are scored on the same images.
const TEST_SUBSET_SEED: u64 = 0x07e5_75e7;

// Seed-stream tags under derive_seed(seed, [size, tag]).
const STREAM_SUBSET: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_CLONES: u64 = 4;
const STREAM_POOLS: u64 = 5;
const STREAM_NOVEL: u64 = 6;
const STREAM_TEST: u64 = 7;

/// Full training and test splits read from `config.data_dir`.
pub fn load_mnist(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let train = Dataset::load(&config.data_dir, Split::Train)?;
    let test = Dataset::load(&config.data_dir, Split::Test)?;
    Ok((train, test))
}

fn class_count(ds: &Dataset) -> Result<usize> {
    ds.labels()
        .iter()
        .max()
        .map(|m| m + 1)
        .ok_or(Error::EmptyInput("training set"))
}

/// A trained network plus, for the clonal variant, the layer that ran
/// during training.
pub struct TrainedRun {
    pub params: LayerStack,
    pub layer: Option<ClonalSelection>,
    pub rows: Vec<SweepResult>,
}

/// Trains one variant on `train` and scores it on `test`. Parameter
/// initialization, shuffling and clone randomness all derive from
/// `(seed, per_class)` only, so the two variants see identical data and
/// identical starting weights.
#[allow(clippy::too_many_arguments)]
pub fn train_variant(
    config: &ExperimentConfig,
    variant: Variant,
    train_set: &Dataset,
    test_set: &Dataset,
    per_class: usize,
    seed: u64,
    epochs: usize,
    every_epoch: bool,
) -> Result<TrainedRun> {
    let arch = Architecture::with_classes(class_count(train_set)?);
    let size_tag = per_class as u64;
    let mut params = init_params(derive_seed(seed, &[size_tag, STREAM_INIT]), arch)?;
    let train_cfg = TrainConfig {
        epochs,
        rng_seed: derive_seed(seed, &[size_tag, STREAM_SHUFFLE]),
        ..config.train
    };
    let mut layer = match variant {
        Variant::Cnn => None,
        Variant::CnnAis => Some(ClonalSelection::new(
            config.clone_config_for(per_class, derive_seed(seed, &[size_tag, STREAM_CLONES])),
        )?),
    };
    let mut rows = Vec::new();
    let hook = layer.as_mut().map(|l| l as &mut dyn ClonalHook);
    train(&mut params, train_set, &train_cfg, hook, |epoch, p, _| {
        if every_epoch || epoch == epochs {
            rows.push(SweepResult {
                variant,
                per_class_size: per_class,
                seed,
                epoch,
                train_error: error_rate(p, train_set)?,
                test_error: error_rate(p, test_set)?,
            });
        }
        Ok(())
    })?;
    Ok(TrainedRun { params, layer, rows })
}

/// The fixed evaluation subset drawn from the test split.
pub fn evaluation_set(test_full: &Dataset, per_class: usize) -> Result<Dataset> {
    stratified_subset(test_full, per_class, TEST_SUBSET_SEED)
}

/// Final-epoch errors for every (variant, size, seed) combination. Rows are
/// ordered by variant, then size, then seed.
pub fn run_size_sweep(config: &ExperimentConfig, train_full: &Dataset, test_full: &Dataset) -> Result<Vec<SweepResult>> {
    config.validate()?;
    let test = evaluation_set(test_full, config.test_per_class)?;
    let mut rows = Vec::new();
    for &variant in &config.variants {
        for &size in &config.sizes {
            for &seed in &config.seeds {
                let subset = stratified_subset(train_full, size, derive_seed(seed, &[size as u64, STREAM_SUBSET]))?;
                let run = train_variant(config, variant, &subset, &test, size, seed, config.train.epochs, false)?;
                rows.extend(run.rows);
            }
        }
    }
    Ok(rows)
}

/// Per-epoch errors of the clonal variant at `curve_per_class` images per
/// class, for every configured seed. Rows are ordered by seed, then epoch.
pub fn run_epoch_curve(config: &ExperimentConfig, train_full: &Dataset, test_full: &Dataset) -> Result<Vec<SweepResult>> {
    config.validate()?;
    if config.curve_epochs == 0 {
        return Err(Error::Config("curve_epochs must be at least 1".into()));
    }
    let size = config.curve_per_class;
    let test = evaluation_set(test_full, config.test_per_class)?;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let subset = stratified_subset(train_full, size, derive_seed(seed, &[size as u64, STREAM_SUBSET]))?;
        let run = train_variant(config, Variant::CnnAis, &subset, &test, size, seed, config.curve_epochs, true)?;
        rows.extend(run.rows);
    }
    Ok(rows)
}

/// Mean test error per epoch over all rows of an epoch curve.
pub fn mean_test_error_by_epoch(rows: &[SweepResult]) -> Vec<(usize, f64)> {
    let mut acc: std::collections::BTreeMap<usize, (f64, usize)> = std::collections::BTreeMap::new();
    for r in rows {
        let slot = acc.entry(r.epoch).or_insert((0.0, 0));
        slot.0 += r.test_error;
        slot.1 += 1;
    }
    acc.into_iter().map(|(e, (s, n))| (e, s / n as f64)).collect()
}

/// Builds memory pools from a trained network: one shuffled pass of the
/// training set through the feature layer and the clonal layer. Pools are
/// keyed by `label_names[label]`.
pub fn build_pools(
    params: &LayerStack,
    train_set: &Dataset,
    label_names: &[usize],
    clone_config: CloneConfig,
    batch_size: usize,
) -> Result<PoolSet> {
    let mut layer = ClonalSelection::new(clone_config)?;
    for batch in batches(train_set, batch_size, clone_config.rng_seed) {
        let mut features = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for idx in batch {
            let (image, label) = train_set.get(idx)?;
            features.push(forward_features(params, image)?.0);
            labels.push(*label_names.get(label).ok_or_else(|| {
                Error::Config(format!("label {label} has no name in {label_names:?}"))
            })?);
        }
        layer.absorb(&features, &labels)?;
    }
    Ok(layer.into_pools())
}

/// Mean phase outputs of one pool over the test images of one true class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub true_class: usize,
    pub pool: usize,
    pub images: usize,
    pub mean_count: f64,
    /// Over images where the avidity is defined.
    pub mean_avidity: Option<f64>,
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoClassReport {
    pub classes: [usize; 2],
    pub novel_class: usize,
    pub test_images: usize,
    pub correct: usize,
    pub no_match: usize,
    /// Output-layer accuracy of the same network on the same images.
    pub network_accuracy: f64,
    /// Training images that end up classified as their own class.
    pub seed_correct: usize,
    pub seed_images: usize,
    pub summaries: Vec<ScoreSummary>,
    pub novel_probed: usize,
    pub novel_no_match: usize,
    /// Label of the pool created from the first unmatched novel image.
    pub new_pool: Option<usize>,
    pub new_pool_size: usize,
    /// The image that seeded the new pool is recognized as the new class.
    pub seed_image_recognized: bool,
    /// Remaining novel images assigned to the new class after its creation.
    pub novel_recognized_after: usize,
    pub trained_pools: PoolSet,
    pub extended_pools: PoolSet,
    pub decisions: Vec<(String, Decision)>,
}

impl TwoClassReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.test_images as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classes {} {}", self.classes[0], self.classes[1]);
        let _ = writeln!(s, "test_images {}", self.test_images);
        let _ = writeln!(s, "accuracy {:.4}", self.accuracy());
        let _ = writeln!(s, "no_match {}", self.no_match);
        let _ = writeln!(s, "network_accuracy {:.4}", self.network_accuracy);
        let _ = writeln!(s, "seed_recognized {}/{}", self.seed_correct, self.seed_images);
        let _ = writeln!(s, "true_class,pool,images,mean_count,mean_avidity,mean_score");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for m in &self.summaries {
            let _ = writeln!(
                s,
                "{},{},{},{:.3},{},{}",
                m.true_class,
                m.pool,
                m.images,
                m.mean_count,
                opt(m.mean_avidity),
                opt(m.mean_score)
            );
        }
        let _ = writeln!(s, "novel_class {}", self.novel_class);
        let _ = writeln!(s, "novel_no_match {}/{}", self.novel_no_match, self.novel_probed);
        match self.new_pool {
            Some(l) => {
                let _ = writeln!(s, "new_pool {l} size {}", self.new_pool_size);
            }
            None => {
                let _ = writeln!(s, "new_pool none");
            }
        }
        let _ = writeln!(s, "seed_image_recognized {}", self.seed_image_recognized);
        let _ = writeln!(s, "novel_recognized_after {}", self.novel_recognized_after);
        s
    }

    /// Writes the report, the decision records and both pool files.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        write_file(&out_dir.join("two_class_report.txt"), &self.to_text())?;
        let records = self.decisions.iter().map(|(id, d)| (id.as_str(), d));
        write_file(&out_dir.join("two_class_decisions.csv"), &decisions_to_csv(records))?;
        write_file(&out_dir.join("two_class_pools.txt"), &self.trained_pools.to_text())?;
        write_file(&out_dir.join("two_class_pools_extended.txt"), &self.extended_pools.to_text())
    }
}

fn summarize(true_classes: &[usize], decisions: &[Decision], classes: [usize; 2]) -> Vec<ScoreSummary> {
    let mut out = Vec::new();
    for &t in &classes {
        for &pool in &classes {
            let picked: Vec<_> = true_classes
                .iter()
                .zip(decisions)
                .filter(|&(&c, _)| c == t)
                .filter_map(|(_, d)| d.class(pool))
                .collect();
            let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            out.push(ScoreSummary {
                true_class: t,
                pool,
                images: picked.len(),
                mean_count: picked.iter().map(|s| s.count as f64).sum::<f64>() / picked.len().max(1) as f64,
                mean_avidity: mean(picked.iter().filter_map(|s| s.avidity).collect()),
                mean_score: mean(picked.iter().filter_map(|s| s.score).collect()),
            });
        }
    }
    out
}

/// Two-digit recognition through the count and avidity classifier, followed
/// by an unseen-class probe: images of `app_novel_class` are classified under
/// the stricter `novel_tau_match`, the first unmatched one seeds a new pool,
/// and the probe images are classified again.
pub fn run_two_class_application(
    config: &ExperimentConfig,
    train_full: &Dataset,
    test_full: &Dataset,
) -> Result<TwoClassReport> {
    config.validate()?;
    let classes = config.app_classes;
    let seed = config.seeds[0];
    let per_class = config.app_train_per_class;
    let size_tag = per_class as u64;
    let test_per_class = config.app_test_count / 2;
    if test_per_class == 0 || config.app_novel_count == 0 {
        return Err(Error::Config("app_test_count must be at least 2 and app_novel_count at least 1".into()));
    }

    let train_set = stratified_subset(
        &train_full.relabel(&classes),
        per_class,
        derive_seed(seed, &[size_tag, STREAM_SUBSET]),
    )?;
    let test_set = stratified_subset(
        &test_full.relabel(&classes),
        test_per_class,
        derive_seed(seed, &[size_tag, STREAM_TEST]),
    )?;
    let novel_set = stratified_subset(
        &test_full.relabel(&[config.app_novel_class]),
        config.app_novel_count,
        derive_seed(seed, &[size_tag, STREAM_NOVEL]),
    )?;

    let run = train_variant(config, Variant::CnnAis, &train_set, &test_set, per_class, seed, config.train.epochs, false)?;
    let params = run.params;
    let pool_cfg = config.clone_config_for(per_class, derive_seed(seed, &[size_tag, STREAM_POOLS]));
    let trained_pools = build_pools(&params, &train_set, &classes, pool_cfg, config.train.batch_size)?;

    let mut decisions = Vec::new();
    let mut test_decisions = Vec::with_capacity(test_set.len());
    let mut true_classes = Vec::with_capacity(test_set.len());
    let (mut correct, mut no_match, mut net_correct) = (0, 0, 0);
    for (i, (image, &label)) in test_set.images().iter().zip(test_set.labels()).enumerate() {
        let feature = forward_features(&params, image)?.0;
        let d = classify(&feature, &trained_pools, &config.classifier)?;
        let truth = classes[label];
        match d.predicted {
            Some(p) if p == truth => correct += 1,
            None => no_match += 1,
            _ => {}
        }
        if predict(&params, image)? == label {
            net_correct += 1;
        }
        true_classes.push(truth);
        decisions.push((format!("test-{i:04}"), d.clone()));
        test_decisions.push(d);
    }

    let mut seed_correct = 0;
    for (image, &label) in train_set.images().iter().zip(train_set.labels()) {
        let feature = forward_features(&params, image)?.0;
        if classify(&feature, &trained_pools, &config.classifier)?.predicted == Some(classes[label]) {
            seed_correct += 1;
        }
    }

    let gate = ClassifierConfig {
        tau_match: config.novel_tau_match,
        ..config.classifier
    };
    let novel_features = novel_set
        .images()
        .iter()
        .map(|img| forward_features(&params, img).map(|(f, _)| f))
        .collect::<Result<Vec<Tensor>>>()?;
    let mut extended_pools = trained_pools.clone();
    let mut novel_no_match = 0;
    let mut seed_index = None;
    for (i, f) in novel_features.iter().enumerate() {
        let d = classify(f, &trained_pools, &gate)?;
        if d.is_no_match() {
            novel_no_match += 1;
            seed_index.get_or_insert(i);
        }
        decisions.push((format!("novel-{i:04}"), d));
    }

    let novel = config.app_novel_class;
    let mut new_pool = None;
    let mut new_pool_size = 0;
    let mut seed_image_recognized = false;
    let mut novel_recognized_after = 0;
    if let Some(si) = seed_index {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[size_tag, STREAM_NOVEL, 1]));
        new_pool_size = extended_pools.init_new_class(&novel_features[si], novel, &pool_cfg, &mut rng)?.len();
        new_pool = Some(novel);
        for (i, f) in novel_features.iter().enumerate() {
            let d = classify(f, &extended_pools, &gate)?;
            if d.predicted == Some(novel) {
                if i == si {
                    seed_image_recognized = true;
                } else {
                    novel_recognized_after += 1;
                }
            }
            decisions.push((format!("novel-{i:04}-after"), d));
        }
    }

    Ok(TwoClassReport {
        classes,
        novel_class: novel,
        test_images: test_set.len(),
        correct,
        no_match,
        network_accuracy: net_correct as f64 / test_set.len() as f64,
        seed_correct,
        seed_images: train_set.len(),
        summaries: summarize(&true_classes, &test_decisions, classes),
        novel_probed: novel_features.len(),
        novel_no_match,
        new_pool,
        new_pool_size,
        seed_image_recognized,
        novel_recognized_after,
        trained_pools,
        extended_pools,
        decisions,
    })
}

const DEMO_GLYPH: [&str; 8] = [
    "..####..", ".##..##.", "##....##", "##....##", "########", "##....##", "##....##", "##....##",
];

/// The 8×8 demo pattern as a ±1 vector.
pub fn clonalg_demo_pattern() -> Tensor {
    Tensor::from_fn(&[64], |i| {
        if DEMO_GLYPH[i / 8].as_bytes()[i % 8] == b'#' {
            1.0
        } else {
            -1.0
        }
    })
}

pub fn clonalg_demo_params(config: &ExperimentConfig) -> (ClonalgParams, CloneConfig) {
    let params = ClonalgParams {
        population_size: config.clonalg_population,
        select_count: config.clonalg_select,
        generations: config.clonalg_generations,
    };
    let clone = CloneConfig {
        eta: config.clonalg_eta,
        alpha: config.clonalg_alpha,
        sigma: config.clonalg_sigma,
        memory_capacity: config.clonalg_select,
        ..config.clone
    };
    (params, clone)
}

/// CLONALG on the demo pattern with the given seed.
pub fn run_clonalg_demo(config: &ExperimentConfig, seed: u64) -> Result<ClonalgOutcome> {
    let (params, clone) = clonalg_demo_params(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clonalg_run(&[clonalg_demo_pattern()], &params, &clone, &mut rng)
}

/// `seed,generation,best_affinity` rows; generation 0 is the initial
/// population.
pub fn clonalg_history_csv(runs: &[(u64, ClonalgOutcome)]) -> String {
    let mut s = String::from("seed,generation,best_affinity\n");
    for (seed, out) in runs {
        let _ = writeln!(s, "{seed},0,{}", out.initial_best);
        for (g, b) in out.best_history.iter().enumerate() {
            let _ = writeln!(s, "{seed},{},{b}", g + 1);
        }
    }
    s
}
