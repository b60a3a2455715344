//! Data files compiled into the library.

/// WordNet single-token common noun lemmas, one per line.
pub const NOUNS: &str = include_str!("../data/nouns.txt");
/// Remote associates items, `stem1,stem2,stem3,answer`.
pub const RAT_ITEMS: &str = include_str!("../data/rat_items.csv");
/// CDAT cue words, one per line.
pub const CUES: &str = include_str!("../data/cues.txt");
pub const ANCHORS_SCIENTIFIC: &str = include_str!("../data/anchors_scientific.txt");
pub const ANCHORS_RELATION_DISTANT: &str = include_str!("../data/anchors_relation_distant.txt");
/// Per-model external benchmark scores; `---` marks a missing cell.
pub const BENCHMARKS_CSV: &str = include_str!("../data/benchmarks.csv");
/// Published per-model test scores in long format.
pub const TEST_SCORES_CSV: &str = include_str!("../data/test_scores.csv");

pub const TEMPLATE_DAT: &str = include_str!("../data/templates/dat.txt");
pub const TEMPLATE_CDAT: &str = include_str!("../data/templates/cdat.txt");
pub const TEMPLATE_PACE_STAGE1: &str = include_str!("../data/templates/pace_stage1.txt");
pub const TEMPLATE_PACE_STAGE2: &str = include_str!("../data/templates/pace_stage2.txt");
pub const TEMPLATE_RAT: &str = include_str!("../data/templates/rat.txt");
pub const TEMPLATE_DRAT: &str = include_str!("../data/templates/drat.txt");

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn nouns() -> Vec<&'static str> {
    lines(NOUNS).collect()
}

pub fn cues() -> Vec<&'static str> {
    lines(CUES).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_is_sorted_lowercase_and_distinct() {
        let n = nouns();
        assert!(n.len() > 40_000);
        assert!(n.windows(2).all(|w| w[0] < w[1]));
        assert!(n.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn cues_are_in_lexicon() {
        let n: std::collections::HashSet<_> = nouns().into_iter().collect();
        let c = cues();
        assert_eq!(c.len(), 50);
        assert!(c.iter().all(|w| n.contains(w)));
    }
}
