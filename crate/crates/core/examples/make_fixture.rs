//! Regenerates the bundled end-to-end fixture.
//!
//! Run: `cargo run -p passage-rank --example make_fixture -- fixtures/e2e`
//!
//! Each query names one rare topic word (in an inflected form that the stem
//! table maps back) and two common words. Its two relevant passages are
//! long and mention all three once; six short distractors repeat the topic
//! word and nothing else from the query. BM25 prefers the distractors, a
//! term-coverage reranker prefers the relevant passages.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: &[&str] = &[
    "ka", "ro", "mi", "le", "sta", "po", "wi", "dro", "ne", "zu", "ła", "gó", "ry", "ce", "bo", "tu", "sze", "li",
];
const STOP: &[&str] = &["i", "w", "na", "się", "jest", "oraz", "że", "do"];
const DOMAINS: &[(&str, usize)] = &[("wiki-trivia", 12), ("legal-questions", 5), ("allegro-faq", 3)];

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/e2e".into()));
    fs::create_dir_all(&out).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2023);

    let mut used = HashSet::new();
    let mut word = |rng: &mut ChaCha8Rng, syllables: usize| loop {
        let w: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if used.insert(w.clone()) {
            return w;
        }
    };
    let topics: Vec<String> = (0..20).map(|_| word(&mut rng, 4)).collect();
    let commons: Vec<String> = (0..12).map(|_| word(&mut rng, 2)).collect();
    let fillers: Vec<String> = (0..300).map(|_| word(&mut rng, 3)).collect();

    let filler_words = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    STOP.choose(rng).unwrap().to_string()
                } else {
                    fillers.choose(rng).unwrap().clone()
                }
            })
            .collect()
    };
    let sentence = |mut words: Vec<String>, rng: &mut ChaCha8Rng| -> String {
        words.shuffle(rng);
        let mut s = words.join(" ");
        if let Some(first) = s.get(..1) {
            s = first.to_uppercase() + &s[1..];
        }
        s + "."
    };

    let mut passages: Vec<(String, String)> = Vec::new();
    let mut queries = String::new();
    let mut qrels = String::new();
    let mut stems = String::from("# surface\tstem\n");
    let mut next_pid = 0usize;
    let mut pid = || {
        next_pid += 1;
        format!("p{next_pid:03}")
    };

    let mut q = 0usize;
    for &(domain, count) in DOMAINS {
        for _ in 0..count {
            let topic = &topics[q];
            let pair: Vec<&String> = commons.choose_multiple(&mut rng, 2).collect();
            let inflected = format!("{topic}ach");
            writeln!(stems, "{inflected}\t{topic}").unwrap();
            writeln!(
                queries,
                "q{:02}\tCzy w {} {} {}?\t{domain}",
                q + 1,
                inflected,
                pair[0],
                pair[1]
            )
            .unwrap();

            for _ in 0..2 {
                let mut words = filler_words(&mut rng, 32);
                words.extend([topic.clone(), pair[0].clone(), pair[1].clone()]);
                let id = pid();
                writeln!(qrels, "q{:02}\t{id}", q + 1).unwrap();
                passages.push((id, sentence(words, &mut rng)));
            }
            for _ in 0..6 {
                let mut words = vec![topic.clone(); 4];
                words.extend(filler_words(&mut rng, 2));
                passages.push((pid(), sentence(words, &mut rng)));
            }
            q += 1;
        }
    }
    while passages.len() < 200 {
        let mut words = filler_words(&mut rng, 14);
        words.extend(commons.choose_multiple(&mut rng, 6).cloned());
        passages.push((pid(), sentence(words, &mut rng)));
    }
    passages.shuffle(&mut rng);

    let corpus: String = passages.iter().map(|(id, text)| format!("{id}\t{text}\n")).collect();
    fs::write(out.join("passages.tsv"), corpus).unwrap();
    fs::write(out.join("queries.tsv"), queries).unwrap();
    fs::write(out.join("qrels.tsv"), qrels).unwrap();
    fs::write(out.join("stems.tsv"), stems).unwrap();
    eprintln!("wrote {} passages, {q} queries to {}", passages.len(), out.display());
}
