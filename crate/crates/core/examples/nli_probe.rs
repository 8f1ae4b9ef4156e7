// Train the bilinear entailment probe over several seeds and inspect the
// relation vectors at annotated token pairs.

use std::error::Error;

use probekit::nli_probe::{self, NliConfig, NliData};
use probekit::synthetic;
use probekit::trainer::TrainConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let train = synthetic::nli_corpus(150, 2, 0.1, 1);
    let dev = synthetic::nli_corpus(60, 2, 0.1, 2);

    let config = NliConfig { rank: 16, ..NliConfig::default() };
    let train_config = TrainConfig { max_epochs: 10, learning_rate: 1e-2, ..TrainConfig::default() };
    let data = NliData {
        train: (&train.pairs, &train.store),
        dev: (&dev.pairs, &dev.store),
        test: None,
    };
    let summary = nli_probe::run_seeds(&config, &train_config, data)?;
    for (seed, run) in &summary.per_seed {
        println!("seed {seed:>4}: dev accuracy {:.3} after {} epochs", run.dev_accuracy, run.outcome.trace.len());
    }
    println!("mean {:.3}", summary.mean);

    let (_, best) = &summary.per_seed[0];
    let pair = &dev.pairs[0];
    let (p, h) = best.outcome.model.embed(
        dev.store.require(&pair.premise_key())?,
        dev.store.require(&pair.hypothesis_key())?,
    )?;
    let logits = nli_probe::logits(&best.outcome.model, &p, &h)?;
    println!(
        "{:?} / {:?}: gold {}, predicted {}",
        pair.premise_tokens,
        pair.hypothesis_tokens,
        pair.label.as_str(),
        nli_probe::predict_from_logits(&logits).as_str()
    );

    let reps = nli_probe::extract_relation_reps(&best.outcome.model, &dev.annotations, &dev.pairs, &dev.store)?;
    for rep in reps.iter().take(3) {
        println!("{} {:?}: |v| = {:.3}", rep.key(), rep.relation_type, rep.values.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
