macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $name() {
            $name::run_example().expect("example runs");
        }
    };
}

example!(embedding_store, "embedding_store.rs");
example!(crf_decoding, "crf_decoding.rs");
example!(ner_probe, "ner_probe.rs");
example!(nli_probe, "nli_probe.rs");
example!(relation_analysis, "relation_analysis.rs");
