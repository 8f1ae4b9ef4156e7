// Linear-chain CRF inference over BIO tags: partition function, marginals
// and constrained Viterbi decoding.

use std::error::Error;

use ndarray::array;
use probekit::corpus::{entities_from_bio, Tag};
use probekit::crf::{self, CrfParams, TransitionMask};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tags = vec![Tag::Outside, Tag::Begin("GENE".into()), Tag::Inside("GENE".into())];
    let mut params = CrfParams::zeros(tags.len());
    params.transitions[[1, 2]] = 1.0;

    // "the p53 protein binds"
    let emissions = array![
        [2.0, 0.1, 0.0],
        [0.0, 0.8, 2.5],
        [0.2, 0.0, 1.0],
        [1.5, 0.0, 0.3],
    ];
    let m = crf::marginals(&params, &emissions)?;
    println!("log Z = {:.4}", m.log_z);
    println!("token marginals:\n{:.3}", m.unary);

    let (free, score) = crf::viterbi(&params, &emissions)?;
    println!("unconstrained path {free:?} score {score:.3}");
    let mask = TransitionMask::bio(&tags);
    let (path, score) = crf::viterbi_masked(&params, &emissions, Some(&mask))?;
    let decoded: Vec<Tag> = path.iter().map(|&i| tags[i].clone()).collect();
    println!("BIO path {path:?} score {score:.3}");
    println!("entities {:?}", entities_from_bio(&decoded)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
