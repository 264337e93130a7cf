use curriculum_core::dataset_io::{
    load_dataset, save_dataset, stratified_split, token_lengths, DataFormat, Dataset, Example,
    SplitTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHABET: &[char] = &[
    'a', 'B', 'z', '0', '9', ' ', ' ', ',', '"', '\'', '\n', '\t', ';', '-', '!', 'é', 'ß', '中',
    '😀', '.', '\\', '\r',
];

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    (0..rng.gen_range(1..=max_len))
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
        .collect()
}

#[test]
fn csv_and_jsonl_round_trip_random_strings() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let examples: Vec<Example> = (0..100)
        .map(|id| Example {
            id,
            text: random_text(&mut rng, 40),
            text_pair: (id % 3 == 0).then(|| random_text(&mut rng, 20)),
            label: rng.gen_range(0..3),
        })
        .collect();
    let ds = Dataset::new(examples, 3, None, SplitTag::Train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("d.csv", DataFormat::Csv), ("d.jsonl", DataFormat::Jsonl)] {
        let path = dir.path().join(name);
        save_dataset(&ds, &path, format).unwrap();
        let back = load_dataset(&path, format, 3).unwrap();
        for (a, b) in ds.examples.iter().zip(&back.examples) {
            assert_eq!(a.text.as_bytes(), b.text.as_bytes(), "{name} id {}", a.id);
            assert_eq!(a.text_pair, b.text_pair, "{name} id {}", a.id);
            assert_eq!(a.label, b.label);
        }
        assert_eq!(back.len(), 100);
    }
}

/// Independent recount: whitespace-separated words, stripped of
/// non-alphanumeric characters at both ends, empties dropped.
fn recount(text: &str) -> usize {
    text.split(char::is_whitespace)
        .filter(|w| {
            let chars: Vec<char> = w.chars().collect();
            let lo = chars.iter().position(|c| c.is_alphanumeric());
            lo.is_some()
        })
        .count()
}

#[test]
fn token_lengths_match_an_independent_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let examples: Vec<Example> = (0..1000)
        .map(|id| Example {
            id,
            text: random_text(&mut rng, 60),
            text_pair: (id % 4 == 0).then(|| random_text(&mut rng, 30)),
            label: id % 2,
        })
        .collect();
    let ds = Dataset::new(examples, 2, None, SplitTag::Train).unwrap();
    let lengths = token_lengths(&ds, None);
    for (ex, &len) in ds.examples.iter().zip(&lengths.lengths) {
        let want = recount(&ex.text) + ex.text_pair.as_deref().map_or(0, recount);
        assert_eq!(len, want, "{:?} / {:?}", ex.text, ex.text_pair);
    }
    let capped = token_lengths(&ds, Some(5));
    assert!(capped
        .lengths
        .iter()
        .zip(&lengths.lengths)
        .all(|(&c, &l)| c == l.min(5)));
}

#[test]
fn three_way_split_partitions_and_stratifies() {
    let examples: Vec<Example> = (0..1000)
        .map(|id| Example {
            id,
            text: format!("t{id}"),
            text_pair: None,
            label: usize::from(id % 10 < 3),
        })
        .collect();
    let ds = Dataset::new(examples, 2, None, SplitTag::Train).unwrap();
    let parts = stratified_split(&ds, &[0.8, 0.1, 0.1], 9).unwrap();
    let mut all: Vec<usize> = parts.iter().flat_map(|p| p.parent_ids.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..1000).collect::<Vec<_>>());
    let sizes: Vec<usize> = parts.iter().map(|p| p.parent_ids.len()).collect();
    assert_eq!(sizes, [800, 100, 100]);
    for p in &parts {
        let positives = p.dataset.class_counts()[1];
        assert_eq!(positives * 10, p.dataset.len() * 3);
        for (child, &parent) in p.dataset.examples.iter().zip(&p.parent_ids) {
            assert_eq!(child.text, ds.examples[parent].text);
        }
    }
    let tags: Vec<SplitTag> = parts.iter().map(|p| p.dataset.split_tag).collect();
    assert_eq!(
        tags,
        [SplitTag::Train, SplitTag::Validation, SplitTag::Test]
    );
}
