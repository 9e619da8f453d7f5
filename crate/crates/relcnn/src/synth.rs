//! Synthetic corpus generation for desk-scale experiments.
//!
//! A spec file describes slots with sentence templates, entity-type lexicons
//! and trigger patterns; the generator emits deterministic train/dev/test
//! splits plus the matching trigger list.
//!
//! Spec format (line oriented):
//!
//! ```text
//! train = 300
//! dev = 100
//! test = 100
//! ambiguous = false
//!
//! [slot per:date_of_birth]
//! t1 = PERSON
//! t2 = DATE
//! template = <name> was born in <filler> .
//! trigger = born in
//!
//! [negatives]
//! template = <name> had coffee with <filler> .
//!
//! [lexicon PERSON]
//! anna meyer
//! ```
//!
//! In ambiguous mode, slots sharing an identical template list form a pair
//! whose token contexts are fully indistinguishable after argument tagging;
//! only the argument type fields tell the paired slots apart.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{save_dataset, RawExample, TriggerList, NEG_LABEL};
use crate::error::{Error, Result};
use crate::rng::sub_rng;
use crate::schema::{EntityType, SlotSchema};

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Name,
    Filler,
}

#[derive(Debug, Clone)]
struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    fn parse(s: &str, line: usize) -> Result<Template> {
        let mut pieces = Vec::new();
        let mut name_pos = None;
        let mut filler_pos = None;
        for (i, tok) in s.split_whitespace().enumerate() {
            match tok {
                "<name>" => {
                    if name_pos.replace(i).is_some() {
                        return Err(Error::parse(line, "template has two <name> slots"));
                    }
                    pieces.push(Piece::Name);
                }
                "<filler>" => {
                    if filler_pos.replace(i).is_some() {
                        return Err(Error::parse(line, "template has two <filler> slots"));
                    }
                    pieces.push(Piece::Filler);
                }
                t => pieces.push(Piece::Text(t.to_string())),
            }
        }
        match (name_pos, filler_pos) {
            (Some(_), Some(_)) => Ok(Template { pieces }),
            _ => Err(Error::parse(
                line,
                "template needs exactly one <name> and one <filler>",
            )),
        }
    }

    /// Tokens strictly between the two argument slots.
    fn middle_text(&self) -> Vec<String> {
        let mut inside = false;
        let mut out = Vec::new();
        for p in &self.pieces {
            match p {
                Piece::Name | Piece::Filler => {
                    if inside {
                        break;
                    }
                    inside = true;
                }
                Piece::Text(t) => {
                    if inside {
                        out.push(t.clone());
                    }
                }
            }
        }
        out
    }

    fn render(&self) -> String {
        self.pieces
            .iter()
            .map(|p| match p {
                Piece::Text(t) => t.as_str(),
                Piece::Name => "<name>",
                Piece::Filler => "<filler>",
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct SlotSpec {
    pub name: String,
    pub t1: EntityType,
    pub t2: EntityType,
    templates: Vec<Template>,
    triggers: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub ambiguous: bool,
    slots: Vec<SlotSpec>,
    negatives: Vec<Template>,
    lexicons: HashMap<EntityType, Vec<Vec<String>>>,
}

enum Section {
    Top,
    Slot(usize),
    Negatives,
    Lexicon(EntityType),
}

pub fn parse_spec(text: &str) -> Result<SynthSpec> {
    let mut spec = SynthSpec {
        train: 0,
        dev: 0,
        test: 0,
        ambiguous: false,
        slots: Vec::new(),
        negatives: Vec::new(),
        lexicons: HashMap::new(),
    };
    let mut section = Section::Top;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let mut it = head.split_whitespace();
            match it.next() {
                Some("slot") => {
                    let name = it
                        .next()
                        .ok_or_else(|| Error::parse(lineno, "[slot <name>] needs a name"))?;
                    spec.slots.push(SlotSpec {
                        name: name.to_string(),
                        t1: EntityType::Other,
                        t2: EntityType::Other,
                        templates: Vec::new(),
                        triggers: Vec::new(),
                    });
                    section = Section::Slot(spec.slots.len() - 1);
                }
                Some("negatives") => section = Section::Negatives,
                Some("lexicon") => {
                    let t = EntityType::parse(
                        it.next()
                            .ok_or_else(|| Error::parse(lineno, "[lexicon <TYPE>]"))?,
                    )
                    .map_err(|e| Error::parse(lineno, e.to_string()))?;
                    spec.lexicons.entry(t).or_default();
                    section = Section::Lexicon(t);
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("unknown section {other:?}"),
                    ))
                }
            }
            continue;
        }
        match &section {
            Section::Top => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, "expected key = value"))?;
                let key = key.trim();
                let value = value.trim();
                match key {
                    "train" => spec.train = parse_count(value, lineno)?,
                    "dev" => spec.dev = parse_count(value, lineno)?,
                    "test" => spec.test = parse_count(value, lineno)?,
                    "ambiguous" => {
                        spec.ambiguous = match value {
                            "true" => true,
                            "false" => false,
                            _ => return Err(Error::parse(lineno, "ambiguous = true|false")),
                        }
                    }
                    other => {
                        return Err(Error::parse(lineno, format!("unknown key `{other}`")))
                    }
                }
            }
            Section::Slot(idx) => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, "expected key = value"))?;
                let slot = &mut spec.slots[*idx];
                match key.trim() {
                    "t1" => {
                        slot.t1 = EntityType::parse(value.trim())
                            .map_err(|e| Error::parse(lineno, e.to_string()))?
                    }
                    "t2" => {
                        slot.t2 = EntityType::parse(value.trim())
                            .map_err(|e| Error::parse(lineno, e.to_string()))?
                    }
                    "template" => slot.templates.push(Template::parse(value, lineno)?),
                    "trigger" => slot.triggers.push(value.trim().to_string()),
                    other => {
                        return Err(Error::parse(lineno, format!("unknown slot key `{other}`")))
                    }
                }
            }
            Section::Negatives => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, "expected key = value"))?;
                if key.trim() != "template" {
                    return Err(Error::parse(lineno, "negatives section takes template lines"));
                }
                spec.negatives.push(Template::parse(value, lineno)?);
            }
            Section::Lexicon(t) => {
                let entry: Vec<String> = line.split_whitespace().map(|s| s.to_string()).collect();
                spec.lexicons.get_mut(t).expect("section init").push(entry);
            }
        }
    }
    validate_spec(&spec)?;
    Ok(spec)
}

fn parse_count(v: &str, line: usize) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::parse(line, format!("bad count `{v}`")))
}

fn validate_spec(spec: &SynthSpec) -> Result<()> {
    if spec.slots.is_empty() {
        return Err(Error::InvalidConfig("spec defines no slots".into()));
    }
    let schema = SlotSchema::tac_kbp();
    for slot in &spec.slots {
        schema.resolve(&slot.name)?;
        if slot.templates.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "slot {} has no templates",
                slot.name
            )));
        }
        for (t, what) in [(slot.t1, "t1"), (slot.t2, "t2")] {
            if !spec.lexicons.get(&t).is_some_and(|l| !l.is_empty()) {
                return Err(Error::InvalidConfig(format!(
                    "slot {} needs a non-empty lexicon for {what} type {}",
                    slot.name,
                    t.name()
                )));
            }
        }
    }
    if spec.ambiguous && ambiguous_groups(spec).is_empty() {
        return Err(Error::InvalidConfig(
            "ambiguous mode needs at least one pair of slots with identical templates and \
             different argument types"
                .into(),
        ));
    }
    Ok(())
}

/// Indices of slots grouped by identical template lists, keeping only groups
/// of two or more slots that differ in an argument type.
fn ambiguous_groups(spec: &SynthSpec) -> Vec<Vec<usize>> {
    let mut by_templates: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
    for (i, slot) in spec.slots.iter().enumerate() {
        let key: Vec<String> = slot.templates.iter().map(|t| t.render()).collect();
        match by_templates.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => by_templates.push((key, vec![i])),
        }
    }
    by_templates
        .into_iter()
        .map(|(_, v)| v)
        .filter(|v| {
            v.len() >= 2
                && v.iter().any(|&i| {
                    let a = &spec.slots[v[0]];
                    let b = &spec.slots[i];
                    a.t1 != b.t1 || a.t2 != b.t2
                })
        })
        .collect()
}

/// The slot-name groups that share identical contexts (ambiguous pairs).
pub fn ambiguous_slot_groups(spec: &SynthSpec) -> Vec<Vec<String>> {
    ambiguous_groups(spec)
        .into_iter()
        .map(|g| g.into_iter().map(|i| spec.slots[i].name.clone()).collect())
        .collect()
}

pub struct SynthOutput {
    pub train: Vec<RawExample>,
    pub dev: Vec<RawExample>,
    pub test: Vec<RawExample>,
    pub triggers: TriggerList,
}

struct ClassDef<'a> {
    label: String,
    t1: EntityType,
    t2: EntityType,
    templates: &'a [Template],
    fixed_types: bool,
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    validate_spec(spec)?;
    let mut rng = sub_rng(seed, "synth");

    let mut classes: Vec<ClassDef> = spec
        .slots
        .iter()
        .map(|s| ClassDef {
            label: s.name.clone(),
            t1: s.t1,
            t2: s.t2,
            templates: &s.templates,
            fixed_types: true,
        })
        .collect();
    if !spec.negatives.is_empty() {
        classes.push(ClassDef {
            label: NEG_LABEL.to_string(),
            t1: EntityType::Other,
            t2: EntityType::Other,
            templates: &spec.negatives,
            fixed_types: false,
        });
    }
    let type_pairs: Vec<(EntityType, EntityType)> =
        spec.slots.iter().map(|s| (s.t1, s.t2)).collect();

    let make_split = |name: &str, count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<RawExample>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let class = &classes[i % classes.len()];
            let (t1, t2) = if class.fixed_types {
                (class.t1, class.t2)
            } else {
                type_pairs[rng.random_range(0..type_pairs.len())]
            };
            let template = &class.templates[rng.random_range(0..class.templates.len())];
            out.push(render_example(
                spec,
                template,
                &format!("{name}-{i:05}"),
                &class.label,
                t1,
                t2,
                rng,
            )?);
        }
        Ok(out)
    };

    let train = make_split("train", spec.train, &mut rng)?;
    let dev = make_split("dev", spec.dev, &mut rng)?;
    let test = make_split("test", spec.test, &mut rng)?;

    let mut triggers = TriggerList::new();
    for slot in &spec.slots {
        for t in &slot.triggers {
            triggers.add(&slot.name, t);
        }
    }

    if spec.ambiguous {
        self_check_ambiguous(spec)?;
    }

    Ok(SynthOutput {
        train,
        dev,
        test,
        triggers,
    })
}

fn sample<'a>(entries: &'a [Vec<String>], rng: &mut ChaCha8Rng) -> &'a [String] {
    &entries[rng.random_range(0..entries.len())]
}

fn render_example(
    spec: &SynthSpec,
    template: &Template,
    id: &str,
    label: &str,
    t1: EntityType,
    t2: EntityType,
    rng: &mut ChaCha8Rng,
) -> Result<RawExample> {
    let lex = |t: EntityType, rng: &mut ChaCha8Rng| -> Result<Vec<String>> {
        let entries = spec
            .lexicons
            .get(&t)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| {
                Error::InvalidConfig(format!("missing lexicon for type {}", t.name()))
            })?;
        Ok(sample(entries, rng).to_vec())
    };
    let name_str = lex(t1, rng)?;
    let filler_str = lex(t2, rng)?;

    let mut tokens: Vec<String> = Vec::new();
    let mut name_span = (0, 0);
    let mut filler_span = (0, 0);
    for piece in &template.pieces {
        match piece {
            Piece::Text(t) => tokens.push(t.clone()),
            Piece::Name => {
                name_span = (tokens.len(), tokens.len() + name_str.len());
                tokens.extend(name_str.iter().cloned());
            }
            Piece::Filler => {
                filler_span = (tokens.len(), tokens.len() + filler_str.len());
                tokens.extend(filler_str.iter().cloned());
            }
        }
    }
    Ok(RawExample {
        id: id.to_string(),
        slot: label.to_string(),
        type1: t1,
        type2: t2,
        name_span,
        filler_span,
        tokens,
    })
}

/// Generator self-check: within every ambiguous group the multiset of
/// template middles must be identical (full identity of the tagged contexts
/// follows because the groups share their template lists verbatim).
fn self_check_ambiguous(spec: &SynthSpec) -> Result<()> {
    for group in ambiguous_groups(spec) {
        let mut reference: Option<Vec<Vec<String>>> = None;
        for &i in &group {
            let mut middles: Vec<Vec<String>> = spec.slots[i]
                .templates
                .iter()
                .map(|t| t.middle_text())
                .collect();
            middles.sort();
            match &reference {
                None => reference = Some(middles),
                Some(r) => {
                    if *r != middles {
                        return Err(Error::InvalidConfig(format!(
                            "ambiguous group containing {} has diverging middle contexts",
                            spec.slots[i].name
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Generate and write train.tsv, dev.tsv, test.tsv and triggers.tsv.
pub fn generate_to_dir(spec: &SynthSpec, seed: u64, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let out = generate(spec, seed)?;
    save_dataset(&out_dir.join("train.tsv"), &out.train)?;
    save_dataset(&out_dir.join("dev.tsv"), &out.dev)?;
    save_dataset(&out_dir.join("test.tsv"), &out.test)?;
    out.triggers.save(&out_dir.join("triggers.tsv"))?;
    Ok(())
}

pub fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot open spec {}: {e}", path.display()))
    })?;
    parse_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
train = 12
dev = 6
test = 6

[slot per:date_of_birth]
t1 = PERSON
t2 = DATE
template = <name> was born in <filler> .
trigger = born in

[slot per:spouse]
t1 = PERSON
t2 = PERSON
template = <name> married <filler> .
trigger = married

[negatives]
template = <name> had coffee with <filler> .

[lexicon PERSON]
anna meyer
bob stone
carla diaz

[lexicon DATE]
june 1976
march 1881
";

    const AMBIG_EXTRA: &str = "\
[slot per:location_of_birth]
t1 = PERSON
t2 = LOCATION
template = <name> was born in <filler> .
trigger = born in

[lexicon LOCATION]
berlin
small creek
";

    #[test]
    fn parses_and_generates_deterministically() {
        let spec = parse_spec(BASIC).unwrap();
        let a = generate(&spec, 7).unwrap();
        let b = generate(&spec, 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
        assert_eq!(a.train.len(), 12);
        assert_eq!(a.dev.len(), 6);
        let c = generate(&spec, 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn zero_counts_give_empty_splits_with_headers() {
        let mut spec = parse_spec(BASIC).unwrap();
        spec.train = 0;
        spec.dev = 0;
        spec.test = 0;
        let dir = tempfile::tempdir().unwrap();
        generate_to_dir(&spec, 7, dir.path()).unwrap();
        let content = std::fs::read_to_string(dir.path().join("train.tsv")).unwrap();
        assert!(content.starts_with('#'));
        assert_eq!(content.lines().count(), 1);
        assert!(crate::dataset::load_dataset(&dir.path().join("train.tsv"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let spec = parse_spec(BASIC).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_to_dir(&spec, 5, d1.path()).unwrap();
        generate_to_dir(&spec, 5, d2.path()).unwrap();
        for f in ["train.tsv", "dev.tsv", "test.tsv", "triggers.tsv"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs across runs");
        }
    }

    #[test]
    fn classes_are_balanced_round_robin() {
        let spec = parse_spec(BASIC).unwrap();
        let out = generate(&spec, 7).unwrap();
        let count = |label: &str| out.train.iter().filter(|e| e.slot == label).count();
        assert_eq!(count("per:date_of_birth"), 4);
        assert_eq!(count("per:spouse"), 4);
        assert_eq!(count(NEG_LABEL), 4);
    }

    #[test]
    fn generated_examples_parse_back() {
        let spec = parse_spec(BASIC).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_to_dir(&spec, 7, dir.path()).unwrap();
        let data = crate::dataset::load_dataset(&dir.path().join("train.tsv")).unwrap();
        assert_eq!(data.len(), 12);
        let trig = TriggerList::load(&dir.path().join("triggers.tsv")).unwrap();
        assert!(trig.matches_slot(
            "per:date_of_birth",
            &["was".into(), "born".into(), "in".into()]
        ));
    }

    #[test]
    fn ambiguous_mode_requires_a_type_contrasting_pair() {
        let err = parse_spec(&format!("ambiguous = true\n{BASIC}")).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn ambiguous_mode_generates_identical_middles() {
        let spec = parse_spec(&format!("ambiguous = true\n{BASIC}{AMBIG_EXTRA}")).unwrap();
        let groups = ambiguous_slot_groups(&spec);
        assert_eq!(groups.len(), 1);
        assert!(groups[0].contains(&"per:date_of_birth".to_string()));
        assert!(groups[0].contains(&"per:location_of_birth".to_string()));

        let out = generate(&spec, 3).unwrap();
        // For each pair example, the tokens strictly between the arguments
        // must form the shared template middle.
        let middles = |slot: &str| -> std::collections::HashSet<Vec<String>> {
            out.train
                .iter()
                .chain(out.dev.iter())
                .chain(out.test.iter())
                .filter(|e| e.slot == slot)
                .map(|e| {
                    let (first, second) = if e.name_span.0 < e.filler_span.0 {
                        (e.name_span, e.filler_span)
                    } else {
                        (e.filler_span, e.name_span)
                    };
                    e.tokens[first.1..second.0].to_vec()
                })
                .collect()
        };
        assert_eq!(middles("per:date_of_birth"), middles("per:location_of_birth"));
    }

    #[test]
    fn unknown_slot_name_is_rejected() {
        let bad = BASIC.replace("per:date_of_birth", "per:made_up_slot");
        assert!(parse_spec(&bad).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_spec("train = 1\nbogus = 2\n").is_err());
    }
}
