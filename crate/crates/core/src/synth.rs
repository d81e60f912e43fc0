//! Seeded generator for the bundled fixture files.
//!
//! Every file under `fixtures/` comes from [`generate`] with
//! [`FIXTURE_SEED`]. Gold annotations (topics, entity spans, Long COVID
//! labels, co-mentions) are recorded while the text is assembled, never by
//! running the annotators, so they can serve as independent references.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CitationRecord;
use crate::entities::{write_mentions, EntityMention, TextField};

pub const FIXTURE_SEED: u64 = 20_230_601;

pub const TOPICS: [&str; 8] = [
    "Treatment",
    "Prevention",
    "Diagnosis",
    "Mechanism",
    "Transmission",
    "Case Report",
    "Epidemic Forecasting",
    "Long COVID",
];

const TOPIC_MARKERS: [&[&str]; 8] = [
    &["treatment", "therapy", "randomized", "trial", "efficacy", "therapeutic", "dosing", "antiviral"],
    &["masks", "distancing", "lockdown", "prevention", "hygiene", "uptake", "immunization", "protective"],
    &["rt-pcr", "diagnostic", "sensitivity", "specificity", "antigen", "testing", "imaging", "assay"],
    &["ace2", "spike", "receptor", "binding", "cytokine", "pathogenesis", "entry", "inflammation"],
    &["transmission", "household", "aerosol", "contacts", "secondary", "airborne", "spread", "exposure"],
    &["case", "presented", "year-old", "report", "admitted", "rare", "man", "woman"],
    &["forecasting", "projections", "reproduction", "seir", "incidence", "epidemic", "curve", "scenarios"],
    &["persistent", "fatigue", "post-acute", "sequelae", "months", "recovery", "dyspnea", "lingering"],
];

const COVID_FILLER: [&str; 40] = [
    "covid-19",
    "sars-cov-2",
    "covid-19",
    "sars-cov-2",
    "coronavirus",
    "study",
    "patients",
    "results",
    "data",
    "analysis",
    "clinical",
    "outcomes",
    "cohort",
    "observed",
    "associated",
    "among",
    "increased",
    "significant",
    "participants",
    "hospital",
    "infection",
    "pandemic",
    "health",
    "population",
    "were",
    "we",
    "the",
    "of",
    "and",
    "in",
    "with",
    "for",
    "during",
    "higher",
    "lower",
    "compared",
    "group",
    "total",
    "reported",
    "evidence",
];

const NONCOVID_FILLER: [&str; 30] = [
    "study",
    "patients",
    "results",
    "data",
    "analysis",
    "clinical",
    "outcomes",
    "cohort",
    "observed",
    "associated",
    "among",
    "increased",
    "significant",
    "participants",
    "were",
    "we",
    "the",
    "of",
    "and",
    "in",
    "with",
    "for",
    "higher",
    "lower",
    "compared",
    "group",
    "total",
    "reported",
    "evidence",
    "baseline",
];

const NONCOVID_THEMES: [&[&str]; 7] = [
    &["tumor", "oncology", "chemotherapy", "metastasis", "carcinoma", "radiotherapy", "biopsy", "survival"],
    &["cardiac", "myocardial", "arrhythmia", "stent", "hypertension", "atrial", "ventricular", "coronary"],
    &["insulin", "glycemic", "diabetes", "hba1c", "metformin", "pancreatic", "obesity", "glucose"],
    &["neuronal", "cortex", "dementia", "cognitive", "synaptic", "hippocampus", "alzheimer", "parkinson"],
    &["tuberculosis", "mycobacterium", "isoniazid", "latent", "sputum", "granuloma", "rifampicin", "bacillus"],
    &["microbiome", "soil", "bacterial", "sequencing", "taxa", "rhizosphere", "community", "diversity"],
    &["dental", "periodontal", "implant", "enamel", "caries", "orthodontic", "gingival", "oral"],
];

const JOURNALS: [&str; 40] = [
    "Journal of Medical Virology",
    "Lancet Infectious Diseases",
    "Vaccine",
    "Clinical Infectious Diseases",
    "BMJ Open",
    "PLoS One",
    "Scientific Reports",
    "Frontiers in Immunology",
    "Emerging Infectious Diseases",
    "Journal of Infection",
    "Nature Communications",
    "Eurosurveillance",
    "Viruses",
    "International Journal of Infectious Diseases",
    "Journal of Clinical Medicine",
    "Cureus",
    "BMC Public Health",
    "Epidemiology and Infection",
    "Clinical Microbiology and Infection",
    "Open Forum Infectious Diseases",
    "JAMA Network Open",
    "Annals of Internal Medicine",
    "Journal of Virology",
    "Cell Reports Medicine",
    "Frontiers in Public Health",
    "Influenza and Other Respiratory Viruses",
    "Journal of Hospital Infection",
    "American Journal of Epidemiology",
    "Vaccines",
    "Microorganisms",
    "Antiviral Research",
    "Journal of Clinical Virology",
    "Medicine",
    "Respiratory Medicine",
    "Chest",
    "Critical Care",
    "Pediatrics",
    "Journal of Travel Medicine",
    "Infection Control and Hospital Epidemiology",
    "Public Health",
];

const SURNAMES: [&str; 24] = [
    "Smith", "Chen", "Garcia", "Kim", "Nguyen", "Patel", "Müller", "Rossi", "Silva", "Tanaka", "Okafor", "Novak",
    "Jensen", "Kowalski", "Haddad", "Ivanova", "Lopez", "Wang", "Brown", "Singh", "Dubois", "Cohen", "Ali", "Sato",
];
const INITIALS: [&str; 12] = ["A", "B", "C", "D", "E", "F", "H", "J", "K", "L", "M", "S"];
const COUNTRIES: [&str; 10] =
    ["USA", "China", "UK", "Italy", "Brazil", "India", "Germany", "Japan", "France", "South Africa"];

/// Entity surfaces known to the generator: display form, type, concept,
/// ambiguous, present in the bundled lexicon.
const SURFACES: [(&str, &str, &str, bool, bool); 48] = [
    ("Alpha", "strain", "STRAIN:Alpha", true, true),
    ("B.1.1.7", "strain", "STRAIN:Alpha", false, true),
    ("Beta", "strain", "STRAIN:Beta", true, true),
    ("B.1.351", "strain", "STRAIN:Beta", false, true),
    ("Gamma", "strain", "STRAIN:Gamma", true, true),
    ("P.1", "strain", "STRAIN:Gamma", false, true),
    ("Delta", "strain", "STRAIN:Delta", true, true),
    ("B.1.617.2", "strain", "STRAIN:Delta", false, true),
    ("Omicron", "strain", "STRAIN:Omicron", false, true),
    ("B.1.1.529", "strain", "STRAIN:Omicron", false, false),
    ("BA.2", "strain", "STRAIN:Omicron-BA.2", false, true),
    ("Omicron BA.2", "strain", "STRAIN:Omicron-BA.2", false, true),
    ("Omicron BA.4.5", "strain", "STRAIN:Omicron-BA.4.5", false, true),
    ("BA.4.5", "strain", "STRAIN:Omicron-BA.4.5", false, true),
    ("XBB.1.5", "strain", "STRAIN:XBB.1.5", false, true),
    ("Mu", "strain", "STRAIN:Mu", true, true),
    ("B.1.621", "strain", "STRAIN:Mu", false, true),
    ("Lambda", "strain", "STRAIN:Lambda", true, true),
    ("C.37", "strain", "STRAIN:Lambda", false, true),
    ("BNT162b2", "vaccine", "VAX:BNT162b2", false, true),
    ("Comirnaty", "vaccine", "VAX:BNT162b2", false, true),
    ("mRNA-1273", "vaccine", "VAX:mRNA-1273", false, true),
    ("Spikevax", "vaccine", "VAX:mRNA-1273", false, true),
    ("ChAdOx1 nCoV-19", "vaccine", "VAX:ChAdOx1", false, true),
    ("AZD1222", "vaccine", "VAX:ChAdOx1", false, true),
    ("Vaxzevria", "vaccine", "VAX:ChAdOx1", false, true),
    ("Covishield", "vaccine", "VAX:ChAdOx1", false, false),
    ("Ad26.COV2.S", "vaccine", "VAX:Ad26.COV2.S", false, true),
    ("CoronaVac", "vaccine", "VAX:CoronaVac", false, true),
    ("BBIBP-CorV", "vaccine", "VAX:BBIBP-CorV", false, true),
    ("NVX-CoV2373", "vaccine", "VAX:NVX-CoV2373", false, true),
    ("Nuvaxovid", "vaccine", "VAX:NVX-CoV2373", false, true),
    ("Sputnik V", "vaccine", "VAX:Sputnik-V", false, true),
    ("Gam-COVID-Vac", "vaccine", "VAX:Sputnik-V", false, true),
    ("Covaxin", "vaccine", "VAX:Covaxin", false, true),
    ("BBV152", "vaccine", "VAX:Covaxin", false, true),
    ("Pfizer", "funder", "FUND:Pfizer", false, true),
    ("BioNTech", "funder", "FUND:BioNTech", false, true),
    ("Moderna", "funder", "FUND:Moderna", false, true),
    ("AstraZeneca", "funder", "FUND:AstraZeneca", false, true),
    ("University of Oxford", "funder", "FUND:Oxford", false, true),
    ("Janssen", "funder", "FUND:Janssen", false, true),
    ("Sinovac", "funder", "FUND:Sinovac", false, true),
    ("Sinopharm", "funder", "FUND:Sinopharm", false, true),
    ("Novavax", "funder", "FUND:Novavax", false, true),
    ("Gamaleya", "funder", "FUND:Gamaleya", false, true),
    ("Bharat Biotech", "funder", "FUND:BharatBiotech", false, true),
    ("Serum Institute of India", "funder", "FUND:SerumInstitute", false, false),
];

const CONCEPT_NAMES: [(&str, &str, &str); 30] = [
    ("STRAIN:Alpha", "strain", "Alpha"),
    ("STRAIN:Beta", "strain", "Beta"),
    ("STRAIN:Gamma", "strain", "Gamma"),
    ("STRAIN:Delta", "strain", "Delta"),
    ("STRAIN:Omicron", "strain", "Omicron"),
    ("STRAIN:Omicron-BA.2", "strain", "Omicron BA.2"),
    ("STRAIN:Omicron-BA.4.5", "strain", "Omicron BA.4.5"),
    ("STRAIN:XBB.1.5", "strain", "XBB.1.5"),
    ("STRAIN:Mu", "strain", "Mu"),
    ("STRAIN:Lambda", "strain", "Lambda"),
    ("VAX:BNT162b2", "vaccine", "BNT162b2"),
    ("VAX:mRNA-1273", "vaccine", "mRNA-1273"),
    ("VAX:ChAdOx1", "vaccine", "ChAdOx1 nCoV-19"),
    ("VAX:Ad26.COV2.S", "vaccine", "Ad26.COV2.S"),
    ("VAX:CoronaVac", "vaccine", "CoronaVac"),
    ("VAX:BBIBP-CorV", "vaccine", "BBIBP-CorV"),
    ("VAX:NVX-CoV2373", "vaccine", "NVX-CoV2373"),
    ("VAX:Sputnik-V", "vaccine", "Sputnik V"),
    ("VAX:Covaxin", "vaccine", "Covaxin"),
    ("FUND:Pfizer", "funder", "Pfizer"),
    ("FUND:BioNTech", "funder", "BioNTech"),
    ("FUND:Moderna", "funder", "Moderna"),
    ("FUND:AstraZeneca", "funder", "AstraZeneca"),
    ("FUND:Oxford", "funder", "University of Oxford"),
    ("FUND:Janssen", "funder", "Janssen"),
    ("FUND:Sinovac", "funder", "Sinovac"),
    ("FUND:Sinopharm", "funder", "Sinopharm"),
    ("FUND:Novavax", "funder", "Novavax"),
    ("FUND:Gamaleya", "funder", "Gamaleya"),
    ("FUND:BharatBiotech", "funder", "Bharat Biotech"),
];

const LINKS: [(&str, &str); 8] = [
    ("VAX:BNT162b2", "FUND:Pfizer"),
    ("VAX:mRNA-1273", "FUND:Moderna"),
    ("VAX:ChAdOx1", "FUND:AstraZeneca"),
    ("VAX:Ad26.COV2.S", "FUND:Janssen"),
    ("VAX:CoronaVac", "FUND:Sinovac"),
    ("VAX:BBIBP-CorV", "FUND:Sinopharm"),
    ("VAX:NVX-CoV2373", "FUND:Novavax"),
    ("VAX:Covaxin", "FUND:BharatBiotech"),
];

const DRUGS: [(&str, &str); 10] = [
    ("Remdesivir", "DRUG:Remdesivir"),
    ("Dexamethasone", "DRUG:Dexamethasone"),
    ("Tocilizumab", "DRUG:Tocilizumab"),
    ("Molnupiravir", "DRUG:Molnupiravir"),
    ("Nirmatrelvir", "DRUG:Nirmatrelvir"),
    ("Baricitinib", "DRUG:Baricitinib"),
    ("Ivermectin", "DRUG:Ivermectin"),
    ("Hydroxychloroquine", "DRUG:Hydroxychloroquine"),
    ("Favipiravir", "DRUG:Favipiravir"),
    ("Sotrovimab", "DRUG:Sotrovimab"),
];

pub const LONGCOVID_SYNONYMS: [&str; 20] = [
    "long covid",
    "long-covid",
    "long covid-19",
    "long haul covid",
    "long haulers",
    "long-haulers",
    "post-acute sequelae of sars-cov-2 infection",
    "post-acute sequelae of sars-cov-2",
    "post-acute sequelae of covid-19",
    "pasc",
    "post-covid condition",
    "post-covid-19 condition",
    "post-covid syndrome",
    "post-covid-19 syndrome",
    "post-acute covid-19 syndrome",
    "chronic covid syndrome",
    "long-term covid",
    "post covid-19 condition",
    "pcc",
    "long-tail covid",
];

pub const SYMPTOMS: [&str; 18] = [
    "fatigue",
    "dyspnea",
    "brain fog",
    "anosmia",
    "ageusia",
    "palpitations",
    "myalgia",
    "headache",
    "insomnia",
    "chest pain",
    "cognitive impairment",
    "post-exertional malaise",
    "tachycardia",
    "joint pain",
    "cough",
    "fever",
    "depression",
    "anxiety",
];

const LC_POSITIVE_WORDS: [&str; 14] = [
    "follow-up",
    "recovered",
    "rehabilitation",
    "post-discharge",
    "quality",
    "life",
    "return",
    "work",
    "convalescent",
    "survivors",
    "symptom",
    "burden",
    "clinic",
    "trajectory",
];
const LC_TEMPORAL: [&str; 8] =
    ["months after", "persistent", "persisting", "sequelae", "lingering", "prolonged", "post-acute", "weeks after"];
const LC_ACUTE_WORDS: [&str; 14] = [
    "icu",
    "ventilation",
    "mortality",
    "admission",
    "oxygen",
    "severity",
    "inpatients",
    "emergency",
    "triage",
    "intubation",
    "d-dimer",
    "lymphopenia",
    "pneumonia",
    "acute",
];
const LC_DISTRACTORS: [&str; 4] = ["long-term care facilities", "chronic kidney disease", "chronic", "prolonged"];
const LC_JOURNALS: [&str; 12] = [
    "Journal of Medical Virology",
    "Clinical Infectious Diseases",
    "BMJ Open",
    "PLoS One",
    "Scientific Reports",
    "Journal of Infection",
    "Critical Care",
    "Chest",
    "Journal of Clinical Medicine",
    "Respiratory Medicine",
    "Frontiers in Medicine",
    "Brain Behavior and Immunity",
];

/// Ambiguous strain names inside sentences with at least eight cue-free
/// tokens on each side.
const NON_MENTION_TEMPLATES: [&str; 4] = [
    "Estimates from the regression were pooled and a beta distribution was fitted to the observed waiting times across all sites",
    "Confidence intervals for each ratio were derived with the delta method and then compared between the two study periods in detail",
    "For all analyses statistical significance was assessed against an alpha level of 0.05 using two sided tests for every secondary outcome",
    "Using standard enzyme linked assays on stored serum samples the levels of interferon gamma were measured by staff blinded to all clinical group assignments",
];

/// A gold span recorded while building a text.
#[derive(Debug, Clone)]
pub struct Tag {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub kind: String,
    pub concept: String,
}

#[derive(Debug, Default)]
struct TextBuf {
    text: String,
    chars: usize,
    tags: Vec<Tag>,
    sentence_start: bool,
}

impl TextBuf {
    fn new() -> Self {
        TextBuf { sentence_start: true, ..Default::default() }
    }

    fn raw(&mut self, s: &str) -> (usize, usize) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        let start = self.chars;
        self.text.push_str(s);
        self.chars += s.chars().count();
        self.sentence_start = false;
        (start, self.chars)
    }

    fn word(&mut self, w: &str) {
        if self.sentence_start {
            let mut c = w.chars();
            let cap: String = match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            };
            self.raw(&cap);
        } else {
            self.raw(w);
        }
    }

    fn words(&mut self, ws: &str) {
        for w in ws.split_whitespace() {
            self.word(w);
        }
    }

    fn tagged(&mut self, surface: &str, kind: &str, concept: &str) {
        let (start, end) = self.raw(surface);
        self.tags.push(Tag { start, end, surface: surface.into(), kind: kind.into(), concept: concept.into() });
    }

    fn end_sentence(&mut self) {
        self.text.push('.');
        self.chars += 1;
        self.sentence_start = true;
    }
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Gen { rng }
    }

    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs.choose(&mut self.rng).copied().expect("non-empty pool")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    fn authors(&mut self) -> Vec<String> {
        (0..self.range(1, 6)).map(|_| format!("{} {}", self.pick(&SURNAMES), self.pick(&INITIALS))).collect()
    }

    fn date_between(&mut self, from: NaiveDate, to: NaiveDate) -> NaiveDate {
        let days = (to - from).num_days();
        from + Duration::days(self.rng.gen_range(0..=days))
    }

    /// Publication date skewed towards later months.
    fn growth_date(&mut self) -> NaiveDate {
        let months = 42u32;
        let weights: Vec<u32> = (0..months).map(|m| 4 + m.min(20)).collect();
        let total: u32 = weights.iter().sum();
        let mut x = self.rng.gen_range(0..total);
        let mut m = 0;
        while x >= weights[m as usize] {
            x -= weights[m as usize];
            m += 1;
        }
        let y = 2020 + (m / 12) as i32;
        let mo = m % 12 + 1;
        NaiveDate::from_ymd_opt(y, mo, self.rng.gen_range(1..=28)).expect("valid date")
    }

    /// A sentence of filler mixed with markers.
    fn sentence(
        &mut self,
        buf: &mut TextBuf,
        filler: &[&str],
        markers: &[&str],
        len: (usize, usize),
        marker_rate: f64,
    ) {
        for _ in 0..self.range(len.0, len.1) {
            let w =
                if !markers.is_empty() && self.chance(marker_rate) { self.pick(markers) } else { self.pick(filler) };
            buf.word(w);
        }
    }
}

fn surfaces_for(concept: &str) -> Vec<(&'static str, &'static str, bool, bool)> {
    SURFACES
        .iter()
        .filter(|s| s.2 == concept)
        .map(|&(surface, kind, _, amb, in_lex)| (surface, kind, amb, in_lex))
        .collect()
}

fn record(pmid: u64, title: &TextBuf, abs: &TextBuf, date: NaiveDate) -> CitationRecord {
    CitationRecord::new(pmid, &title.text, &abs.text, date)
}

fn jsonl(records: &[CitationRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

fn mentions_tsv(mentions: &[EntityMention]) -> String {
    let mut buf = Vec::new();
    write_mentions(&mut buf, mentions).expect("write to memory");
    String::from_utf8(buf).expect("utf8")
}

fn tags_to_mentions(pmid: u64, field: TextField, tags: &[Tag]) -> Vec<EntityMention> {
    tags.iter()
        .map(|t| EntityMention {
            pmid,
            field,
            start: t.start,
            end: t.end,
            surface: t.surface.clone(),
            entity_type: t.kind.clone(),
            concept_id: t.concept.clone(),
        })
        .collect()
}

pub fn lexicon_tsv() -> String {
    let mut out = String::from("#entries\n");
    for (surface, kind, concept, amb, in_lex) in SURFACES {
        if in_lex {
            out.push_str(&format!("{}\t{kind}\t{concept}\t{}\n", surface.to_lowercase(), u8::from(amb)));
        }
    }
    out.push_str("#concepts\n");
    for (id, kind, name) in CONCEPT_NAMES {
        out.push_str(&format!("{id}\t{kind}\t{name}\n"));
    }
    out.push_str("#links\n");
    for (v, f) in LINKS {
        out.push_str(&format!("{v}\t{f}\n"));
    }
    out
}

/// Inserts an entity phrase for `concept`; ambiguous surfaces always get an
/// adjacent cue.
fn entity_phrase(g: &mut Gen, buf: &mut TextBuf, concept: &str, lexicon_only: bool) {
    let options: Vec<_> = surfaces_for(concept).into_iter().filter(|s| !lexicon_only || s.3).collect();
    let &(surface, kind, amb, _) = options.choose(&mut g.rng).expect("concept has surfaces");
    match kind {
        "strain" => {
            buf.word("the");
            buf.tagged(surface, kind, concept);
            if amb || g.chance(0.5) {
                buf.word("variant");
            }
        }
        "vaccine" => {
            buf.word(g.pick(&["the", "a", "two", "three"]));
            buf.word("doses");
            buf.word("of");
            buf.tagged(surface, kind, concept);
        }
        _ => {
            buf.words("supplied by");
            buf.tagged(surface, kind, concept);
        }
    }
}

const STRAIN_CONCEPTS: [&str; 10] = [
    "STRAIN:Alpha",
    "STRAIN:Beta",
    "STRAIN:Gamma",
    "STRAIN:Delta",
    "STRAIN:Omicron",
    "STRAIN:Omicron-BA.2",
    "STRAIN:Omicron-BA.4.5",
    "STRAIN:XBB.1.5",
    "STRAIN:Mu",
    "STRAIN:Lambda",
];
const VACCINE_CONCEPTS: [&str; 9] = [
    "VAX:BNT162b2",
    "VAX:mRNA-1273",
    "VAX:ChAdOx1",
    "VAX:Ad26.COV2.S",
    "VAX:CoronaVac",
    "VAX:BBIBP-CorV",
    "VAX:NVX-CoV2373",
    "VAX:Sputnik-V",
    "VAX:Covaxin",
];

/// A COVID-19 article with assigned topics, optional entity mentions and
/// drug mentions.
struct CovidDoc {
    record: CitationRecord,
    topics: BTreeSet<String>,
    concepts: BTreeSet<String>,
    drugs: Vec<EntityMention>,
}

fn covid_doc(g: &mut Gen, pmid: u64, date: NaiveDate, journal: &str, comention: bool) -> CovidDoc {
    let n_topics = match g.rng.gen_range(0..100) {
        0..=59 => 1,
        60..=89 => 2,
        _ => 3,
    };
    let mut idx: Vec<usize> = (0..TOPICS.len()).collect();
    idx.shuffle(&mut g.rng);
    let chosen: Vec<usize> = idx[..n_topics].to_vec();
    let mut markers: Vec<&str> = chosen.iter().flat_map(|&i| TOPIC_MARKERS[i].iter().copied()).collect();
    if g.chance(0.15) {
        let stray = idx[n_topics..].choose(&mut g.rng).copied().expect("topics left");
        markers.push(TOPIC_MARKERS[stray][g.range(0, 7)]);
    }

    let mut title = TextBuf::new();
    g.sentence(&mut title, &COVID_FILLER, &markers, (5, 9), 0.5);

    let mut abs = TextBuf::new();
    let mut concepts = BTreeSet::new();
    let mut drugs = Vec::new();
    let n_sent = g.range(4, 7);
    let mut strain = g.chance(0.4).then(|| g.pick(&STRAIN_CONCEPTS));
    let mut vaccine = g.chance(0.35).then(|| g.pick(&VACCINE_CONCEPTS));
    if comention {
        strain = Some("STRAIN:Omicron");
        vaccine = Some("VAX:BNT162b2");
    }
    let drug = (chosen.contains(&0) && g.chance(0.6) || g.chance(0.05)).then(|| *DRUGS.choose(&mut g.rng).unwrap());
    for s in 0..n_sent {
        g.sentence(&mut abs, &COVID_FILLER, &markers, (8, 16), 0.3);
        if s == 1 {
            if let Some(c) = strain {
                entity_phrase(g, &mut abs, c, true);
                concepts.insert(c.to_string());
            }
        }
        if s == 2 {
            if let Some(c) = vaccine {
                entity_phrase(g, &mut abs, c, true);
                concepts.insert(c.to_string());
                if g.chance(0.3) {
                    if let Some((_, f)) = LINKS.iter().find(|(v, _)| *v == c) {
                        entity_phrase(g, &mut abs, f, true);
                        concepts.insert(f.to_string());
                    }
                }
            }
        }
        if s == 3 {
            if let Some((surface, concept)) = drug {
                abs.words("treated with");
                let (start, end) = abs.raw(surface);
                drugs.push(EntityMention {
                    pmid,
                    field: TextField::Abstract,
                    start,
                    end,
                    surface: surface.into(),
                    entity_type: "drug".into(),
                    concept_id: concept.into(),
                });
            }
        }
        abs.end_sentence();
    }

    let mut r = record(pmid, &title, &abs, date);
    r.journal = journal.into();
    r.authors = g.authors();
    r.country = g.pick(&COUNTRIES).into();
    r.keywords = vec!["COVID-19".into(), TOPICS[chosen[0]].to_lowercase()];
    CovidDoc { record: r, topics: chosen.iter().map(|&i| TOPICS[i].to_string()).collect(), concepts, drugs }
}

/// A non-COVID article; `incidental` adds one keyword mention of the given
/// archetype (0 background sentence, 1 funding text, 2 unrelated).
fn noncovid_doc(g: &mut Gen, pmid: u64, date: NaiveDate, incidental: Option<u8>) -> CitationRecord {
    let theme = *NONCOVID_THEMES.choose(&mut g.rng).unwrap();
    let mut title = TextBuf::new();
    g.sentence(&mut title, &NONCOVID_FILLER, theme, (5, 9), 0.5);
    let mut abs = TextBuf::new();
    for _ in 0..g.range(4, 7) {
        g.sentence(&mut abs, &NONCOVID_FILLER, theme, (8, 16), 0.35);
        abs.end_sentence();
    }
    let mut funding = String::from("Supported by institutional funds.");
    match incidental {
        Some(0) => {
            abs.words("Recruitment slowed during the COVID-19 pandemic");
            abs.end_sentence();
        }
        Some(1) => funding = "Supported by a COVID-19 research relief grant.".into(),
        Some(_) => {
            abs.words("Samples were stored in freezers also used for SARS-CoV-2 work");
            abs.end_sentence();
            abs.words("No COVID-19 patients were enrolled");
            abs.end_sentence();
        }
        None => {}
    }
    let mut r = record(pmid, &title, &abs, date);
    r.journal = g
        .pick(&[
            "Oncology Reports",
            "Heart",
            "Diabetes Care",
            "Neurology",
            "Tubercle",
            "Microbiome",
            "Journal of Dentistry",
        ])
        .into();
    r.authors = g.authors();
    r.funding_text = funding;
    r.country = g.pick(&COUNTRIES).into();
    r
}

fn triage_line(r: &CitationRecord, relevant: bool) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&r.to_line()).expect("valid");
    v["relevant"] = serde_json::Value::Bool(relevant);
    v.to_string() + "\n"
}

/// The three exclusion archetypes: background sentence, funding only,
/// unrelated findings.
pub fn triage_archetypes() -> Vec<CitationRecord> {
    let d = NaiveDate::from_ymd_opt(2022, 8, 1).unwrap();
    let mut background = CitationRecord::new(
        35926511,
        "Immune responses in latent tuberculosis",
        "Tuberculosis is caused by the bacterium Mycobacterium tuberculosis and is ranked as the second killer infectious disease after COVID-19. We measured granuloma markers in sputum from patients with latent infection. Isoniazid exposure was associated with lower bacillus counts at baseline.",
        d,
    );
    background.journal = "Tubercle".into();
    let mut funding = CitationRecord::new(
        36044171,
        "Rhizosphere microbiome diversity in irrigated soil",
        "We sequenced bacterial taxa from soil samples collected across three seasons. Community diversity increased with irrigation and was associated with rhizosphere depth.",
        d,
    );
    funding.journal = "Microbiome".into();
    funding.funding_text = "This work was supported by a COVID-19 research relief grant.".into();
    let mut unrelated = CitationRecord::new(
        35000003,
        "Periodontal implant outcomes in older adults",
        "Dental implant survival was compared among cohorts with periodontal disease. Records from the same clinics were also reviewed for SARS-CoV-2 testing. Caries and gingival indices were higher in the implant group; no COVID-19 outcomes were analysed.",
        d,
    );
    unrelated.journal = "Journal of Dentistry".into();
    vec![background, funding, unrelated]
}

/// Long COVID fixture example: 100 abstract tokens, two synonym mentions and
/// three symptom terms, no synonym in the title.
pub fn longcovid_signal_example() -> CitationRecord {
    let abs = "Patients with post-acute sequelae of SARS-CoV-2 infection were followed in a dedicated outpatient \
service for one year after discharge from hospital care in two cities. Among 412 adults enrolled we recorded \
fatigue and dyspnea as the most frequent complaints while brain fog was reported less often by the younger \
participants in the cohort. Findings from this long COVID clinic suggest that structured rehabilitation improves \
function and that access to multidisciplinary teams should be expanded across regions where services remain \
limited for adults who were never admitted to intensive care units during their initial illness at home with close family support";
    let mut r = CitationRecord::new(
        37099999,
        "Outcomes of an outpatient rehabilitation service",
        abs,
        NaiveDate::from_ymd_opt(2022, 6, 1).unwrap(),
    );
    r.journal = "BMJ Open".into();
    r.authors = vec!["Jensen K".into()];
    r
}

fn longcovid_doc(g: &mut Gen, pmid: u64, positive: bool, named: bool) -> CitationRecord {
    let date =
        g.date_between(NaiveDate::from_ymd_opt(2020, 9, 1).unwrap(), NaiveDate::from_ymd_opt(2023, 5, 31).unwrap());
    let mut title = TextBuf::new();
    let mut abs = TextBuf::new();
    if positive {
        let markers: Vec<&str> = LC_POSITIVE_WORDS.iter().chain(SYMPTOMS.iter().take(14)).copied().collect();
        if named && g.chance(0.5) {
            title.words(g.pick(&LONGCOVID_SYNONYMS));
            g.sentence(&mut title, &COVID_FILLER, &LC_POSITIVE_WORDS, (3, 6), 0.4);
        } else {
            g.sentence(&mut title, &COVID_FILLER, &markers, (5, 8), 0.4);
        }
        let n = g.range(4, 6);
        for s in 0..n {
            g.sentence(&mut abs, &COVID_FILLER, &markers, (8, 14), 0.3);
            if s == 0 || g.chance(0.4) {
                abs.words(g.pick(&LC_TEMPORAL));
            }
            if named && s == 1 {
                abs.words(g.pick(&LONGCOVID_SYNONYMS));
            }
            if g.chance(0.5) {
                abs.words(g.pick(&SYMPTOMS));
            }
            abs.end_sentence();
        }
    } else {
        let acute: Vec<&str> = LC_ACUTE_WORDS.to_vec();
        g.sentence(&mut title, &COVID_FILLER, &acute, (5, 8), 0.4);
        for _ in 0..g.range(4, 6) {
            g.sentence(&mut abs, &COVID_FILLER, &acute, (8, 14), 0.3);
            if g.chance(0.25) {
                abs.words(g.pick(&["fever", "cough", "headache", "fatigue", "anosmia", "myalgia"]));
            }
            if g.chance(0.12) {
                abs.words(g.pick(&LC_DISTRACTORS));
            }
            if g.chance(0.08) {
                abs.words(g.pick(&LC_POSITIVE_WORDS));
            }
            abs.end_sentence();
        }
        if g.chance(0.04) {
            abs.words("patients with long COVID were excluded");
            abs.end_sentence();
        }
    }
    let journal = if positive && g.chance(0.5) {
        g.pick(&LC_JOURNALS[9..])
    } else if !positive && g.chance(0.3) {
        g.pick(&LC_JOURNALS[6..9])
    } else {
        g.pick(&LC_JOURNALS[..9])
    };
    let mut r = record(pmid, &title, &abs, date);
    r.journal = journal.into();
    r.authors = g.authors();
    r
}

/// Generates every fixture file, keyed by file name.
pub fn generate(seed: u64) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    files.insert("lexicon.tsv".into(), lexicon_tsv());

    // 1,000-record collection with topics, entities and drugs.
    let mut g = Gen::new(seed, 1);
    let mut docs = Vec::new();
    for i in 0..1000u64 {
        let date = g.growth_date();
        let journal = JOURNALS[(i as usize) % JOURNALS.len()];
        docs.push(covid_doc(&mut g, 33_000_001 + i, date, journal, i % 50 == 17));
    }
    docs.sort_by_key(|d| (d.record.pub_date, d.record.pmid));
    let records: Vec<CitationRecord> = docs.iter().map(|d| d.record.clone()).collect();
    files.insert("corpus_1k.jsonl".into(), jsonl(&records));
    let mut labels = String::new();
    let mut by_pmid: Vec<&CovidDoc> = docs.iter().collect();
    by_pmid.sort_by_key(|d| d.record.pmid);
    for d in &by_pmid {
        labels.push_str(&format!("{}\t{}\n", d.record.pmid, d.topics.iter().cloned().collect::<Vec<_>>().join(",")));
    }
    files.insert("topic_labels.tsv".into(), labels);
    let drugs: Vec<EntityMention> = by_pmid.iter().flat_map(|d| d.drugs.clone()).collect();
    files.insert("drugs.tsv".into(), mentions_tsv(&drugs));
    let mut comention = String::from("# pmids tagged with both STRAIN:Omicron and VAX:BNT162b2\n");
    for d in &by_pmid {
        if d.concepts.contains("STRAIN:Omicron") && d.concepts.contains("VAX:BNT162b2") {
            comention.push_str(&format!("{}\n", d.record.pmid));
        }
    }
    files.insert("comention_omicron_bnt162b2.txt".into(), comention);
    let mut concepts_tsv = String::from("pmid\tconcepts\n");
    for d in &by_pmid {
        concepts_tsv.push_str(&format!(
            "{}\t{}\n",
            d.record.pmid,
            d.concepts.iter().cloned().collect::<Vec<_>>().join(",")
        ));
    }
    files.insert("corpus_concepts.tsv".into(), concepts_tsv);

    // Whole-literature baseline per quarter, so the collection is about 9%.
    let mut per_quarter: BTreeMap<(i32, u32), u64> = BTreeMap::new();
    for r in &records {
        *per_quarter.entry((r.pub_date.year(), r.pub_date.month0() / 3 + 1)).or_default() += 1;
    }
    let mut baseline = String::from("period\tcount\n");
    for ((y, q), n) in &per_quarter {
        let base = (*n as f64 / 0.09).round() as u64 + g.rng.gen_range(0..40);
        baseline.push_str(&format!("{y}-Q{q}\t{base}\n"));
    }
    files.insert("baseline_quarterly.tsv".into(), baseline);

    // External trending list: 30 collection members, 20 outsiders.
    let mut trending = String::from("pmid\tscore\n");
    let mut members: Vec<u64> = records.iter().map(|r| r.pmid).collect();
    members.shuffle(&mut g.rng);
    let mut items: Vec<(u64, f64)> = members[..30].iter().map(|p| (*p, 0.0)).collect();
    items.extend((0..20).map(|i| (39_500_001 + i, 0.0)));
    items.shuffle(&mut g.rng);
    for (p, _) in &items {
        let score: f64 = g.rng.gen_range(0.0..100.0);
        trending.push_str(&format!("{p}\t{:.3}\n", score));
    }
    files.insert("trending.tsv".into(), trending);

    // Long COVID seeds drawn from the collection's topic labels.
    let mut lc_pos: Vec<u64> =
        by_pmid.iter().filter(|d| d.topics.contains("Long COVID")).map(|d| d.record.pmid).collect();
    let mut lc_neg: Vec<u64> =
        by_pmid.iter().filter(|d| !d.topics.contains("Long COVID")).map(|d| d.record.pmid).collect();
    lc_pos.shuffle(&mut g.rng);
    lc_neg.shuffle(&mut g.rng);
    let mut seeds: Vec<(u64, bool)> =
        lc_pos[..15].iter().map(|p| (*p, true)).chain(lc_neg[..15].iter().map(|p| (*p, false))).collect();
    seeds.sort();
    files.insert(
        "corpus_longcovid_seeds.tsv".into(),
        seeds.iter().map(|(p, y)| format!("{p}\t{}\n", if *y { "accepted" } else { "rejected" })).collect(),
    );

    // Pipeline delta: 7 COVID articles and 3 others.
    let mut g = Gen::new(seed, 2);
    let mut delta = Vec::new();
    for i in 0..10u64 {
        let date =
            g.date_between(NaiveDate::from_ymd_opt(2023, 6, 1).unwrap(), NaiveDate::from_ymd_opt(2023, 6, 30).unwrap());
        if i % 10 < 7 {
            delta.push(covid_doc(&mut g, 38_000_001 + i, date, JOURNALS[i as usize], false).record);
        } else {
            delta.push(noncovid_doc(&mut g, 38_000_001 + i, date, None));
        }
    }
    files.insert("delta.jsonl".into(), jsonl(&delta));

    // Triage sets.
    let mut g = Gen::new(seed, 3);
    let triage_set = |g: &mut Gen, base: u64, n_pos: u64, n_neg: u64| -> String {
        let mut out = Vec::new();
        for i in 0..n_pos {
            let date = g.growth_date();
            let j = g.pick(&JOURNALS);
            out.push((covid_doc(g, base + i, date, j, false).record, true));
        }
        for i in 0..n_neg {
            let date = g.growth_date();
            let incidental = g.chance(0.3).then_some((i % 3) as u8);
            out.push((noncovid_doc(g, base + n_pos + i, date, incidental), false));
        }
        out.shuffle(&mut g.rng);
        out.iter().map(|(r, y)| triage_line(r, *y)).collect()
    };
    files.insert("triage_train.jsonl".into(), triage_set(&mut g, 34_000_001, 100, 100));
    files.insert("triage_test.jsonl".into(), triage_set(&mut g, 34_100_001, 25, 25));
    files.insert("triage_archetypes.jsonl".into(), jsonl(&triage_archetypes()));
    files.insert("triage_archetypes_expected.tsv".into(), "35926511\t2\n36044171\t3\n35000003\t1\n".into());

    // NER benchmark: 50 documents with gold spans.
    let mut g = Gen::new(seed, 4);
    let mut ner_docs = Vec::new();
    let mut gold = Vec::new();
    let all_concepts: Vec<&str> = STRAIN_CONCEPTS.iter().chain(VACCINE_CONCEPTS.iter()).copied().collect();
    for i in 0..50u64 {
        let pmid = 36_000_001 + i;
        let mut title = TextBuf::new();
        g.sentence(&mut title, &COVID_FILLER, &[], (3, 5), 0.0);
        if g.chance(0.5) {
            let c = g.pick(&all_concepts);
            entity_phrase(&mut g, &mut title, c, false);
        }
        let mut abs = TextBuf::new();
        if g.chance(0.5) {
            abs.words(g.pick(&NON_MENTION_TEMPLATES));
            abs.end_sentence();
        }
        for _ in 0..g.range(3, 5) {
            g.sentence(&mut abs, &COVID_FILLER, &[], (4, 8), 0.0);
            let c = g.pick(&all_concepts);
            entity_phrase(&mut g, &mut abs, c, false);
            if c.starts_with("VAX:") && g.chance(0.4) {
                let funders: Vec<&str> = SURFACES.iter().filter(|s| s.1 == "funder").map(|s| s.2).collect();
                let f = LINKS.iter().find(|(v, _)| *v == c).map(|(_, f)| *f).unwrap_or_else(|| g.pick(&funders));
                entity_phrase(&mut g, &mut abs, f, false);
            }
            g.sentence(&mut abs, &COVID_FILLER, &[], (3, 6), 0.0);
            abs.end_sentence();
        }
        if g.chance(0.3) {
            abs.words(g.pick(&NON_MENTION_TEMPLATES));
            abs.end_sentence();
        }
        gold.extend(tags_to_mentions(pmid, TextField::Title, &title.tags));
        gold.extend(tags_to_mentions(pmid, TextField::Abstract, &abs.tags));
        let mut r = record(pmid, &title, &abs, g.growth_date());
        r.journal = g.pick(&JOURNALS).into();
        ner_docs.push(r);
    }
    files.insert("ner_benchmark.jsonl".into(), jsonl(&ner_docs));
    files.insert("ner_gold.tsv".into(), mentions_tsv(&gold));

    // Agreement fixture: two annotators, ten mentions each, eight identical.
    let a: Vec<EntityMention> = gold[..10].to_vec();
    let mut b: Vec<EntityMention> = gold[..8].to_vec();
    let mut shifted = gold[8].clone();
    shifted.end += 1;
    let mut relabeled = gold[9].clone();
    relabeled.concept_id =
        if relabeled.concept_id == "STRAIN:Delta" { "STRAIN:Alpha".into() } else { "STRAIN:Delta".into() };
    relabeled.entity_type = "strain".into();
    b.push(shifted);
    b.push(relabeled);
    files.insert("iaa_annotator_a.tsv".into(), mentions_tsv(&a));
    files.insert("iaa_annotator_b.tsv".into(), mentions_tsv(&b));

    // Long COVID loop fixture.
    let mut g = Gen::new(seed, 5);
    let mut lc_records = Vec::new();
    let mut oracle = String::new();
    let mut heldout = Vec::new();
    for (base, n, out) in [(37_000_001u64, 600u64, &mut lc_records), (37_100_001, 200, &mut heldout)] {
        for i in 0..n {
            let positive = g.chance(0.25);
            let named = positive && g.chance(0.35);
            let r = longcovid_doc(&mut g, base + i, positive, named);
            oracle.push_str(&format!("{}\t{}\n", r.pmid, if positive { "accepted" } else { "rejected" }));
            out.push(r);
        }
    }
    let example = longcovid_signal_example();
    oracle.push_str(&format!("{}\taccepted\n", example.pmid));
    lc_records.push(example);
    files.insert("longcovid_pool.jsonl".into(), jsonl(&lc_records));
    files.insert("longcovid_heldout.jsonl".into(), jsonl(&heldout));
    files.insert("longcovid_oracle.tsv".into(), oracle.clone());
    let labels: BTreeMap<u64, bool> = oracle
        .lines()
        .map(|l| {
            let (p, y) = l.split_once('\t').unwrap();
            (p.parse().unwrap(), y == "accepted")
        })
        .collect();
    let named: BTreeSet<u64> = lc_records
        .iter()
        .filter(|r| {
            let t = crate::text::token_terms(&r.text()).join(" ");
            LONGCOVID_SYNONYMS
                .iter()
                .any(|s| format!(" {t} ").contains(&format!(" {} ", crate::text::token_terms(s).join(" "))))
        })
        .map(|r| r.pmid)
        .collect();
    let pool_pos: Vec<u64> = lc_records.iter().map(|r| r.pmid).filter(|p| labels[p]).collect();
    let pool_neg: Vec<u64> = lc_records.iter().map(|r| r.pmid).filter(|p| !labels[p]).collect();
    let mut seeds: Vec<(u64, bool)> = Vec::new();
    seeds.extend(pool_pos.iter().filter(|p| named.contains(p)).take(10).map(|p| (*p, true)));
    seeds.extend(pool_pos.iter().filter(|p| !named.contains(p)).take(10).map(|p| (*p, true)));
    seeds.extend(pool_neg.iter().take(20).map(|p| (*p, false)));
    seeds.sort();
    files.insert(
        "longcovid_seeds.tsv".into(),
        seeds.iter().map(|(p, y)| format!("{p}\t{}\n", if *y { "accepted" } else { "rejected" })).collect(),
    );
    let mut syn = String::from("#entries\n");
    for s in LONGCOVID_SYNONYMS {
        syn.push_str(&format!("{s}\tsynonym\tLONGCOVID\t0\n"));
    }
    syn.push_str("#concepts\nLONGCOVID\tcondition\tLong COVID\n");
    files.insert("longcovid_synonyms.tsv".into(), syn);
    files.insert("symptoms.tsv".into(), SYMPTOMS.iter().map(|s| format!("{s}\n")).collect());

    files
}

pub fn write_all(dir: impl AsRef<Path>, seed: u64) -> io::Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = generate(seed);
    for (name, content) in &files {
        fs::write(dir.join(name), content)?;
    }
    Ok(files.into_keys().collect())
}
