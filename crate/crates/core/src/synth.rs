//! Synthetic "trigger" corpora: every sentence contains one trigger word that
//! occurs a second time a few words later. Predicting the repeat requires
//! remembering which trigger was seen, which a small LSTM does poorly and
//! attention over past states does well.

use crate::math::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerCorpusConfig {
    pub sentences: usize,
    /// Number of distinct filler words `f0, f1, ...`.
    pub fillers: usize,
    /// Number of distinct trigger words `t0, t1, ...`.
    pub triggers: usize,
    /// Fillers before the first trigger, drawn from `0..=max_lead`.
    pub max_lead: usize,
    /// Fillers between the two occurrences, drawn from `min_gap..=max_gap`.
    pub min_gap: usize,
    pub max_gap: usize,
    /// Fillers after the repeat, drawn from `0..=max_tail`.
    pub max_tail: usize,
}

impl Default for TriggerCorpusConfig {
    fn default() -> Self {
        TriggerCorpusConfig {
            sentences: 2000,
            fillers: 60,
            triggers: 130,
            max_lead: 2,
            min_gap: 4,
            max_gap: 12,
            max_tail: 2,
        }
    }
}

pub fn is_trigger(word: &str) -> bool {
    word.starts_with('t') && word[1..].parse::<usize>().is_ok()
}

pub fn trigger_corpus(config: &TriggerCorpusConfig, seed: u64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    let filler = |rng: &mut Rng| format!("f{}", rng.below(config.fillers));
    (0..config.sentences)
        .map(|_| {
            let trigger = format!("t{}", rng.below(config.triggers));
            let mut words = Vec::new();
            for _ in 0..rng.below(config.max_lead + 1) {
                words.push(filler(&mut rng));
            }
            words.push(trigger.clone());
            let gap = config.min_gap + rng.below(config.max_gap - config.min_gap + 1);
            for _ in 0..gap {
                words.push(filler(&mut rng));
            }
            words.push(trigger);
            for _ in 0..rng.below(config.max_tail + 1) {
                words.push(filler(&mut rng));
            }
            words.join(" ")
        })
        .collect()
}

/// Word positions (0-based, within the sentence) of the first and second
/// occurrence of the trigger.
pub fn trigger_positions(line: &str) -> Option<(usize, usize)> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let first = words.iter().position(|w| is_trigger(w))?;
    let second = (first + 1..words.len()).find(|&j| words[j] == words[first])?;
    Some((first, second))
}
