//! Broad phonetic classes used by the last scoring tier.
//!
//! The mapping is the IPA table in `data/ipa_classes.tsv`. Labels are looked
//! up verbatim, then with suprasegmental marks and secondary articulations
//! removed (`aː`, `tʰ`, `ˈa`, tone digits), then by their leading symbol.
//! Anything still unresolved is [`BroadClass::Other`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// The symbol table shipped with the crate.
pub const IPA_CLASS_TABLE: &str = include_str!("../data/ipa_classes.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BroadClass {
    Vowel,
    Plosive,
    Fricative,
    Nasal,
    Approximant,
    Affricate,
    Other,
}

impl BroadClass {
    pub const ALL: [BroadClass; 7] = [
        BroadClass::Vowel,
        BroadClass::Plosive,
        BroadClass::Fricative,
        BroadClass::Nasal,
        BroadClass::Approximant,
        BroadClass::Affricate,
        BroadClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BroadClass::Vowel => "vowel",
            BroadClass::Plosive => "plosive",
            BroadClass::Fricative => "fricative",
            BroadClass::Nasal => "nasal",
            BroadClass::Approximant => "approximant",
            BroadClass::Affricate => "affricate",
            BroadClass::Other => "other",
        }
    }
}

impl fmt::Display for BroadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BroadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BroadClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown broad class '{s}'"))
    }
}

fn table() -> &'static HashMap<&'static str, BroadClass> {
    static TABLE: OnceLock<HashMap<&'static str, BroadClass>> = OnceLock::new();
    TABLE.get_or_init(|| {
        IPA_CLASS_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (sym, class) = l.split_once('\t').expect("two tab-separated columns");
                (sym, class.trim().parse().expect("valid class name"))
            })
            .collect()
    })
}

fn is_modifier(c: char) -> bool {
    matches!(
        c,
        'ː' | 'ˑ' | 'ʰ' | 'ʲ' | 'ʷ' | 'ˠ' | 'ˤ' | 'ⁿ' | 'ˡ' | 'ˈ' | 'ˌ' | '˞' | '*'
    ) || c.is_ascii_digit()
        // combining diacritics, keeping the tie bars
        || (('\u{0300}'..='\u{036F}').contains(&c) && c != '\u{0361}' && c != '\u{035C}')
}

/// Maps a phoneme label onto its broad class. Total: unknown symbols map to
/// [`BroadClass::Other`].
pub fn broad_class(phoneme_label: &str) -> BroadClass {
    let table = table();
    if let Some(&c) = table.get(phoneme_label) {
        return c;
    }
    let stripped: String = phoneme_label.nfd().filter(|c| !is_modifier(*c)).collect();
    if let Some(&c) = table.get(stripped.as_str()) {
        return c;
    }
    let mut buf = [0u8; 4];
    stripped
        .chars()
        .next()
        .and_then(|c| table.get(&*c.encode_utf8(&mut buf)).copied())
        .unwrap_or(BroadClass::Other)
}
