use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;
use unicode_normalization::UnicodeNormalization;

use super::SyllableParts;
use crate::error::InventoryError;
use crate::orthography::Tone;

pub const ONSET_COUNT: usize = 26;
pub const MEDIAL_COUNT: usize = 2;
pub const NUCLEUS_COUNT: usize = 23;
pub const CODA_COUNT: usize = 12;

const BUNDLED: &str = include_str!("../../data/inventory.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InventoryFile {
    onsets: Vec<String>,
    medials: Vec<String>,
    nuclei: Vec<String>,
    codas: Vec<String>,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    name: String,
    #[serde(default)]
    description: String,
    when: PatternFile,
    require: Option<PatternFile>,
    forbid: Option<PatternFile>,
    #[serde(default)]
    accept: Vec<Vec<String>>,
    #[serde(default)]
    reject: Vec<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    onset: Option<Vec<String>>,
    medial: Option<Vec<String>>,
    nucleus: Option<Vec<String>>,
    coda: Option<Vec<String>>,
    tone: Option<Vec<String>>,
}

/// Conjunction of per-slot membership tests. Absent slots match anything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pattern {
    pub onset: Option<Vec<String>>,
    pub medial: Option<Vec<String>>,
    pub nucleus: Option<Vec<String>>,
    pub coda: Option<Vec<String>>,
    pub tone: Option<Vec<Tone>>,
}

impl Pattern {
    pub fn mentions_tone(&self) -> bool {
        self.tone.is_some()
    }

    /// `tone` is only consulted when the pattern has a tone slot.
    pub fn matches(&self, parts: &SyllableParts, tone: Option<Tone>) -> bool {
        fn slot(set: &Option<Vec<String>>, value: &str) -> bool {
            set.as_ref().is_none_or(|s| s.iter().any(|v| v == value))
        }
        slot(&self.onset, &parts.onset)
            && slot(&self.medial, &parts.medial)
            && slot(&self.nucleus, &parts.nucleus)
            && slot(&self.coda, &parts.coda)
            && match (&self.tone, tone) {
                (None, _) => true,
                (Some(tones), Some(t)) => tones.contains(&t),
                (Some(_), None) => false,
            }
    }
}

/// A named phonotactic constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub description: String,
    pub when: Pattern,
    pub require: Option<Pattern>,
    pub forbid: Option<Pattern>,
    pub accept: Vec<(SyllableParts, Option<Tone>)>,
    pub reject: Vec<(SyllableParts, Option<Tone>)>,
}

impl Rule {
    pub fn is_tonal(&self) -> bool {
        self.when.mentions_tone()
            || self.require.as_ref().is_some_and(Pattern::mentions_tone)
            || self.forbid.as_ref().is_some_and(Pattern::mentions_tone)
    }

    /// Tonal rules are vacuously satisfied when the tone is unknown.
    pub fn is_violated(&self, parts: &SyllableParts, tone: Option<Tone>) -> bool {
        if tone.is_none() && self.is_tonal() {
            return false;
        }
        if !self.when.matches(parts, tone) {
            return false;
        }
        let missing = self.require.as_ref().is_some_and(|p| !p.matches(parts, tone));
        let forbidden = self.forbid.as_ref().is_some_and(|p| p.matches(parts, tone));
        missing || forbidden
    }
}

/// Closed component inventories plus the constraint rules.
#[derive(Debug, Clone)]
pub struct SyllableInventory {
    pub onsets: Vec<String>,
    pub medials: Vec<String>,
    pub nuclei: Vec<String>,
    pub codas: Vec<String>,
    pub rules: Vec<Rule>,
    onsets_by_length: Vec<String>,
    nuclei_by_length: Vec<String>,
    coda_set: HashSet<String>,
}

impl SyllableInventory {
    /// The inventory shipped with the crate, parsed once.
    pub fn bundled() -> &'static SyllableInventory {
        static INVENTORY: OnceLock<SyllableInventory> = OnceLock::new();
        INVENTORY.get_or_init(|| {
            SyllableInventory::from_toml_str(BUNDLED).expect("bundled inventory is valid")
        })
    }

    pub fn load(path: &Path) -> Result<Self, InventoryError> {
        let text = std::fs::read_to_string(path).map_err(|source| InventoryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, InventoryError> {
        let file: InventoryFile = toml::from_str(text)?;
        let nfc = |v: Vec<String>| -> Vec<String> { v.into_iter().map(|s| s.nfc().collect()).collect() };
        let onsets = nfc(file.onsets);
        let medials = nfc(file.medials);
        let nuclei = nfc(file.nuclei);
        let codas = nfc(file.codas);

        for (what, items, expected) in [
            ("onsets", &onsets, ONSET_COUNT),
            ("medials", &medials, MEDIAL_COUNT),
            ("nuclei", &nuclei, NUCLEUS_COUNT),
            ("codas", &codas, CODA_COUNT),
        ] {
            let distinct: HashSet<&String> = items.iter().collect();
            if distinct.len() != expected || items.len() != expected {
                return Err(InventoryError::CountMismatch {
                    what,
                    expected,
                    found: distinct.len(),
                });
            }
        }

        let mut onsets_by_length = onsets.clone();
        onsets_by_length.push(String::new());
        onsets_by_length.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        let mut nuclei_by_length = nuclei.clone();
        nuclei_by_length.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        let coda_set = codas.iter().cloned().collect();

        let mut inventory = SyllableInventory {
            onsets,
            medials,
            nuclei,
            codas,
            rules: Vec::new(),
            onsets_by_length,
            nuclei_by_length,
            coda_set,
        };
        let mut names = HashSet::new();
        for raw in file.rules {
            if !names.insert(raw.name.clone()) {
                return Err(InventoryError::BadRule {
                    rule: raw.name,
                    message: "duplicate rule name".into(),
                });
            }
            let rule = inventory.compile_rule(raw)?;
            inventory.rules.push(rule);
        }
        Ok(inventory)
    }

    fn compile_rule(&self, raw: RuleFile) -> Result<Rule, InventoryError> {
        let name = raw.name.clone();
        let bad = |message: String| InventoryError::BadRule {
            rule: name.clone(),
            message,
        };
        let pattern = |p: PatternFile| -> Result<Pattern, InventoryError> {
            let check = |slot: &str, values: Option<Vec<String>>, known: &[String]| {
                let Some(values) = values else {
                    return Ok(None);
                };
                let values: Vec<String> = values.into_iter().map(|v| v.nfc().collect()).collect();
                for v in &values {
                    if !v.is_empty() && !known.contains(v) {
                        return Err(bad(format!("unknown {slot} {v:?}")));
                    }
                }
                Ok(Some(values))
            };
            let tone = match p.tone {
                None => None,
                Some(names) => Some(
                    names
                        .iter()
                        .map(|n| n.parse::<Tone>().map_err(|e| bad(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
            };
            Ok(Pattern {
                onset: check("onset", p.onset, &self.onsets)?,
                medial: check("medial", p.medial, &self.medials)?,
                nucleus: check("nucleus", p.nucleus, &self.nuclei)?,
                coda: check("coda", p.coda, &self.codas)?,
                tone,
            })
        };
        let example = |fields: Vec<String>| -> Result<(SyllableParts, Option<Tone>), InventoryError> {
            if !(4..=5).contains(&fields.len()) {
                return Err(bad(format!("example {fields:?} needs 4 or 5 fields")));
            }
            let tone = match fields.get(4) {
                Some(t) => Some(t.parse::<Tone>().map_err(|e| bad(e.to_string()))?),
                None => None,
            };
            let f = |i: usize| -> String { fields[i].nfc().collect() };
            Ok((SyllableParts::new(&f(0), &f(1), &f(2), &f(3)), tone))
        };
        Ok(Rule {
            name: raw.name.clone(),
            description: raw.description,
            when: pattern(raw.when)?,
            require: raw.require.map(pattern).transpose()?,
            forbid: raw.forbid.map(pattern).transpose()?,
            accept: raw.accept.into_iter().map(example).collect::<Result<_, _>>()?,
            reject: raw.reject.into_iter().map(example).collect::<Result<_, _>>()?,
        })
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// Onsets longest first, ending with the empty onset.
    pub(crate) fn onsets_longest_first(&self) -> &[String] {
        &self.onsets_by_length
    }

    pub(crate) fn nuclei_longest_first(&self) -> &[String] {
        &self.nuclei_by_length
    }

    pub(crate) fn is_coda(&self, s: &str) -> bool {
        s.is_empty() || self.coda_set.contains(s)
    }

    /// Names of the rules `parts` breaks. Tonal rules are skipped when `tone`
    /// is `None`.
    pub fn violations(&self, parts: &SyllableParts, tone: Option<Tone>) -> Vec<String> {
        self.rules
            .iter()
            .filter(|r| r.is_violated(parts, tone))
            .map(|r| r.name.clone())
            .collect()
    }

    pub fn in_inventory(&self, parts: &SyllableParts) -> bool {
        (parts.onset.is_empty() || self.onsets.contains(&parts.onset))
            && (parts.medial.is_empty() || self.medials.contains(&parts.medial))
            && self.nuclei.contains(&parts.nucleus)
            && self.is_coda(&parts.coda)
    }
}
