// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed word lists for every family. Prompts are built only from these and
//! the fixed template text, so the runtime vocabulary can be closed too.

use std::sync::OnceLock;

const ONSETS: [&str; 24] = [
    "w", "y", "z", "d", "r", "n", "t", "v", "j", "g", "sh", "l", "st", "gr", "br", "f", "k",
    "b", "h", "p", "m", "s", "", "ch",
];
const VOWELS: [&str; 5] = ["u", "o", "i", "e", "a"];

/// Pseudoword categories (`wumpus`, `rompus`, `impus`, ...) from an
/// onset-vowel-`mpus` grammar, in a fixed order.
pub fn pronto_categories() -> &'static [String] {
    static WORDS: OnceLock<Vec<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        ONSETS
            .iter()
            .flat_map(|o| VOWELS.iter().map(move |v| format!("{o}{v}mpus")))
            .collect()
    })
}

pub fn plural(category: &str) -> String {
    format!("{category}es")
}

pub fn with_article(category: &str) -> String {
    let article = if category.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!("{article} {category}")
}

pub const PRONTO_ATTRIBUTES: [&str; 24] = [
    "opaque", "sour", "bright", "happy", "fruity", "small", "large", "hot", "cold", "red",
    "blue", "transparent", "shy", "kind", "metallic", "wooden", "liquid", "spicy", "bitter",
    "sweet", "feisty", "floral", "nervous", "earthy",
];

pub const PRONTO_NAMES: [&str; 8] = ["Polly", "Max", "Alex", "Sam", "Rex", "Fae", "Wren", "Stella"];

pub const PARARULE_NAMES: [&str; 12] = [
    "Harry", "Anne", "Gary", "Fiona", "Bob", "Charlie", "Dave", "Erin", "Alan", "Bella", "Carol",
    "Dan",
];

pub const PARARULE_ATTRIBUTES: [&str; 36] = [
    "strong", "big", "high", "thin", "little", "smart", "quiet", "kind", "poor", "rough", "sad",
    "short", "small", "nice", "wealthy", "bad", "dull", "young", "round", "cold", "furry", "white",
    "huge", "heavy", "tiny", "clever", "careful", "green", "red", "blue", "rich", "tall", "fat",
    "old", "weak", "lazy",
];

/// Verb phrases as (third person singular, base form).
pub const MLE_VERBS: [(&str, &str); 32] = [
    ("uses a fishing rod", "use a fishing rod"),
    ("catches fish", "catch fish"),
    ("cooks dinner", "cook dinner"),
    ("reads books", "read books"),
    ("drinks tea", "drink tea"),
    ("plays chess", "play chess"),
    ("rides a bike", "ride a bike"),
    ("walks the dog", "walk the dog"),
    ("studies hard", "study hard"),
    ("passes the exam", "pass the exam"),
    ("wakes up early", "wake up early"),
    ("goes jogging", "go jogging"),
    ("feels healthy", "feel healthy"),
    ("paints pictures", "paint pictures"),
    ("writes poems", "write poems"),
    ("bakes bread", "bake bread"),
    ("grows vegetables", "grow vegetables"),
    ("visits the library", "visit the library"),
    ("sings songs", "sing songs"),
    ("watches movies", "watch movies"),
    ("takes the bus", "take the bus"),
    ("saves money", "save money"),
    ("buys a car", "buy a car"),
    ("learns french", "learn french"),
    ("plants trees", "plant trees"),
    ("fixes computers", "fix computers"),
    ("climbs mountains", "climb mountains"),
    ("wins the race", "win the race"),
    ("drives to work", "drive to work"),
    ("practices piano", "practice piano"),
    ("goes to the gym", "go to the gym"),
    ("gets a promotion", "get a promotion"),
];

pub const MLE_NAMES: [&str; 12] = [
    "Michael", "Sarah", "James", "Emma", "David", "Olivia", "John", "Lucy", "Peter", "Mia",
    "Tom", "Nora",
];

/// Predicate symbol for an mle verb phrase.
pub fn verb_predicate(base: &str) -> String {
    base.replace(' ', "_")
}

/// Every lexicon word, split on spaces.
pub fn all_words() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in pronto_categories() {
        out.push(c.clone());
        out.push(plural(c));
    }
    let lists: [&[&str]; 5] =
        [&PRONTO_ATTRIBUTES, &PRONTO_NAMES, &PARARULE_NAMES, &PARARULE_ATTRIBUTES, &MLE_NAMES];
    for list in lists {
        out.extend(list.iter().map(|w| w.to_string()));
    }
    for (third, base) in MLE_VERBS {
        out.extend(third.split(' ').chain(base.split(' ')).map(str::to_string));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_grammar() {
        let cats = pronto_categories();
        assert_eq!(cats.len(), ONSETS.len() * VOWELS.len());
        for known in ["wumpus", "rompus", "jompus", "impus", "vumpus", "tumpus"] {
            assert!(cats.iter().any(|c| c == known), "{known}");
        }
        let mut sorted = cats.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), cats.len());
    }

    #[test]
    fn articles_and_plurals() {
        assert_eq!(with_article("impus"), "an impus");
        assert_eq!(with_article("rompus"), "a rompus");
        assert_eq!(plural("vumpus"), "vumpuses");
    }

    #[test]
    fn lists_have_no_duplicates() {
        let mut attrs = PARARULE_ATTRIBUTES.to_vec();
        attrs.sort();
        attrs.dedup();
        assert_eq!(attrs.len(), PARARULE_ATTRIBUTES.len());
        let mut verbs: Vec<_> = MLE_VERBS.iter().map(|v| v.1).collect();
        verbs.sort();
        verbs.dedup();
        assert_eq!(verbs.len(), MLE_VERBS.len());
    }
}
