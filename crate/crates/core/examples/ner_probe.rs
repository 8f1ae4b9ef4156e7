// Train the CRF tagging probe on a synthetic corpus, evaluate it and save a
// checkpoint.

use std::error::Error;

use probekit::checkpoint;
use probekit::ner_probe::{self, NerConfig, NerProbeModel, TagVocab};
use probekit::synthetic;
use probekit::trainer::TrainConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let train = synthetic::ner_corpus(150, 3, 0.1, 1);
    let dev = synthetic::ner_corpus(40, 3, 0.1, 2);

    let config = NerConfig { hidden: vec![32], ..NerConfig::default() };
    let train_config = TrainConfig { max_epochs: 15, learning_rate: 1e-2, ..TrainConfig::default() };
    let vocab = TagVocab::from_corpora(&[&train.corpus]);
    let seed = 7;
    let init = NerProbeModel::new(vocab, 3, synthetic::NER_DIM, &config, seed)?;
    let outcome = ner_probe::train(
        init,
        (&train.corpus, &train.store),
        (&dev.corpus, &dev.store),
        &train_config,
        seed,
    )?;
    for r in &outcome.trace {
        println!("epoch {:>2}  loss {:>9.3}  dev F1 {:.3}", r.epoch, r.train_loss, r.dev_metric);
    }

    let model = outcome.model;
    let report = ner_probe::evaluate_corpus(&model, &dev.corpus, &dev.store)?;
    println!("best epoch {:?}: {report:?}", outcome.best_epoch);
    println!("learned layer weights {:.3}", model.mix.normalized());

    let first = &dev.corpus.sentences[0];
    let spans = ner_probe::decode(&model, dev.store.require(&first.id)?)?;
    println!("{:?} -> {spans:?}", first.tokens);

    let ckpt = checkpoint::ner_checkpoint(&model, seed, &train_config);
    let restored = checkpoint::ner_from_checkpoint(&checkpoint::Checkpoint::decode(&ckpt.encode())?)?;
    assert_eq!(ner_probe::evaluate_corpus(&restored, &dev.corpus, &dev.store)?, report);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
