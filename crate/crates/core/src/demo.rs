//! Builds a runnable hub setup from the bundled fixture files: trains the
//! triage and topic models and writes a config pointing at everything.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::corpus::{read_records, CitationRecord};
use crate::hub::HubError;
use crate::topics::{read_label_file, train_topics, TopicHyper, TopicSet, DEFAULT_TOPICS};
use crate::triage::{read_labeled, train_triage, TriageHyper};

/// The checked-in fixture directory of this repository.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"))
}

fn open(path: &Path) -> Result<BufReader<File>, HubError> {
    File::open(path).map(BufReader::new).map_err(|e| HubError::Config(format!("{}: {e}", path.display())))
}

/// Topic training pairs for the collection fixture, in pmid order.
pub fn topic_training_set(fixtures: &Path) -> Result<Vec<(CitationRecord, BTreeSet<String>)>, HubError> {
    let labels = read_label_file(open(&fixtures.join("topic_labels.tsv"))?)?;
    let mut out: Vec<_> = read_records(open(&fixtures.join("corpus_1k.jsonl"))?)?
        .into_iter()
        .filter_map(|r| labels.get(&r.pmid).cloned().map(|l| (r, l)))
        .collect();
    out.sort_by_key(|(r, _)| r.pmid);
    Ok(out)
}

/// Trains both models into `work/models/` and writes `work/hub.toml` with
/// its data directory at `work/data`. Returns the config path.
pub fn prepare(fixtures: &Path, work: &Path) -> Result<PathBuf, HubError> {
    let models = work.join("models");
    fs::create_dir_all(&models)?;

    let labeled = read_labeled(open(&fixtures.join("triage_train.jsonl"))?)?;
    let triage = train_triage(&labeled, &TriageHyper::default())?.model;
    triage.write(BufWriter::new(File::create(models.join("triage.model"))?))?;

    let topics =
        train_topics(&topic_training_set(fixtures)?, &TopicSet::new(DEFAULT_TOPICS)?, &TopicHyper::default())?.model;
    topics.write(BufWriter::new(File::create(models.join("topics.model"))?))?;

    let f = |name: &str| fixtures.join(name).display().to_string();
    let config = format!(
        "data_dir = \"data\"\n\
         triage_model = \"models/triage.model\"\n\
         topic_model = \"models/topics.model\"\n\
         lexicon = {:?}\n\
         drug_mentions = {:?}\n\
         longcovid_synonyms = {:?}\n\
         symptoms = {:?}\n\
         longcovid_seeds = {:?}\n\
         baseline = {:?}\n\
         trending = {:?}\n",
        f("lexicon.tsv"),
        f("drugs.tsv"),
        f("longcovid_synonyms.tsv"),
        f("symptoms.tsv"),
        f("corpus_longcovid_seeds.tsv"),
        f("baseline_quarterly.tsv"),
        f("trending.tsv"),
    );
    let path = work.join("hub.toml");
    fs::write(&path, config)?;
    Ok(path)
}
