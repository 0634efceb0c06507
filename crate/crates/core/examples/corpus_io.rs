//! Export a synthetic corpus in the TSV layout and load it back.
use san::data::{build_vocab, load_corpus, synth_generate, write_corpus, Corpus, SynthSpec};

fn main() -> san::Result<()> {
    let dir = std::env::temp_dir().join("san-corpus-example");
    let corpus = synth_generate(&SynthSpec::parse("preset=tiny")?)?;
    write_corpus(&dir, &corpus.to_raw())?;
    let raw = load_corpus(&dir)?;
    let vocab = build_vocab(&raw, 5000);
    let back = Corpus::from_raw(&raw, vocab, None)?;
    for d in &back.domains {
        println!("{}: {} labeled, {} unlabeled, {} test", d.name, d.labeled.len(), d.unlabeled.len(), d.test.len());
    }
    println!("features {} in {}", back.input_dim, dir.display());
    Ok(())
}
