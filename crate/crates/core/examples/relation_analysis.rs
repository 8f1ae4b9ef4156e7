// Nearest-neighbour analysis of relation vectors: same-type proportions per
// seed, averaged, and compared against an untrained baseline.

use std::error::Error;

use probekit::nli_probe::{self, NliConfig, NliProbeModel};
use probekit::relation_analysis::{self as analysis, Metric};
use probekit::synthetic;
use probekit::trainer::TrainConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let train = synthetic::nli_corpus(150, 2, 0.1, 1);
    let dev = synthetic::nli_corpus(90, 2, 0.1, 2);
    let config = NliConfig { rank: 16, ..NliConfig::default() };
    let train_config = TrainConfig { max_epochs: 8, learning_rate: 1e-2, ..TrainConfig::default() };

    let mut reports = Vec::new();
    let mut baselines = Vec::new();
    let mut seeds = Vec::new();
    for seed in [1, 2] {
        let init = NliProbeModel::new(2, synthetic::NLI_DIM, &config, seed)?;
        let baseline = nli_probe::extract_relation_reps(&init, &dev.annotations, &dev.pairs, &dev.store)?;
        let outcome = nli_probe::train(
            init,
            (&train.pairs, &train.store),
            (&dev.pairs, &dev.store),
            &train_config,
            seed,
        )?;
        let reps = nli_probe::extract_relation_reps(&outcome.model, &dev.annotations, &dev.pairs, &dev.store)?;
        reports.push(analysis::knn_same_type(&analysis::labeled_relations(&reps)?, 5, Metric::Cosine)?);
        baselines.push(analysis::knn_same_type(&analysis::labeled_relations(&baseline)?, 5, Metric::Cosine)?);
        seeds.push(seed.to_string());
    }
    let tests = analysis::compare_reports(&reports[0], &baselines[0])?;
    let averaged = analysis::average_reports(reports)?;
    print!("{}", analysis::format_report(&averaged, &seeds, Some(&tests)));

    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
