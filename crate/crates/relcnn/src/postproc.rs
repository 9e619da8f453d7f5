//! Slot-filler output selection and location disambiguation/inference.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Output policy of one slot: single- or list-valued, with a score
/// threshold and a cap on list outputs.
#[derive(Debug, Clone)]
pub struct SlotSpec {
    pub slot: String,
    pub single_valued: bool,
    pub top_n: usize,
    pub base_threshold: f64,
}

impl SlotSpec {
    fn validate(&self) -> Result<()> {
        if !self.single_valued && self.top_n < 1 {
            return Err(Error::InvalidConfig(format!(
                "list-valued slot {} needs top_n >= 1",
                self.slot
            )));
        }
        if !(0.0..=1.0).contains(&self.base_threshold) {
            return Err(Error::InvalidConfig(format!(
                "slot {} threshold {} outside [0, 1]",
                self.slot, self.base_threshold
            )));
        }
        Ok(())
    }
}

/// TSV: slot <TAB> single|list <TAB> top_n <TAB> base_threshold
pub fn load_slot_specs(path: &Path) -> Result<Vec<SlotSpec>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot open slot spec {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, "expected 4 tab-separated fields"));
        }
        let single_valued = match fields[1] {
            "single" => true,
            "list" => false,
            other => return Err(Error::parse(lineno, format!("bad valued kind `{other}`"))),
        };
        let spec = SlotSpec {
            slot: fields[0].to_string(),
            single_valued,
            top_n: fields[2]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad top_n `{}`", fields[2])))?,
            base_threshold: fields[3]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad threshold `{}`", fields[3])))?,
        };
        spec.validate()?;
        out.push(spec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillerCandidate {
    pub filler: String,
    pub score: f64,
    pub sentence_id: String,
}

/// Threshold, rank and cut the candidate list. Hop-1 sub-queries raise the
/// threshold by 0.1; survivors are ordered by score descending (ties by
/// filler string); single-valued slots emit only the top candidate.
pub fn select_fillers(
    candidates: &[FillerCandidate],
    spec: &SlotSpec,
    hop: u8,
) -> Vec<FillerCandidate> {
    let effective = spec.base_threshold + if hop >= 1 { 0.1 } else { 0.0 };
    let mut kept: Vec<FillerCandidate> = candidates
        .iter()
        .filter(|c| c.score >= effective)
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.filler.cmp(&b.filler))
    });
    let cap = if spec.single_valued { 1 } else { spec.top_n };
    kept.truncate(cap);
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationCategory {
    City,
    State,
    Country,
    Unknown,
}

impl LocationCategory {
    pub fn name(self) -> &'static str {
        match self {
            LocationCategory::City => "city",
            LocationCategory::State => "state",
            LocationCategory::Country => "country",
            LocationCategory::Unknown => "unknown",
        }
    }
}

/// City/state/country membership sets plus the upward mappings, all
/// case-folded.
#[derive(Debug, Clone, Default)]
pub struct LocationMaps {
    pub cities: HashSet<String>,
    pub states: HashSet<String>,
    pub countries: HashSet<String>,
    pub city_to_state: HashMap<String, String>,
    pub city_to_country: HashMap<String, String>,
    pub state_to_country: HashMap<String, String>,
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

impl LocationMaps {
    /// Load from a directory holding cities.txt / states.txt / countries.txt
    /// (one name per line) and city_to_state.tsv / city_to_country.tsv /
    /// state_to_country.tsv (child <TAB> parent).
    pub fn load_dir(dir: &Path) -> Result<LocationMaps> {
        let read_set = |name: &str| -> Result<HashSet<String>> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::InvalidConfig(format!("cannot open {}: {e}", path.display()))
            })?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(fold)
                .collect())
        };
        let read_map = |name: &str| -> Result<HashMap<String, String>> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::InvalidConfig(format!("cannot open {}: {e}", path.display()))
            })?;
            let mut map = HashMap::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (child, parent) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(i + 1, format!("{name}: expected child<TAB>parent")))?;
                map.insert(fold(child), fold(parent));
            }
            Ok(map)
        };
        let maps = LocationMaps {
            cities: read_set("cities.txt")?,
            states: read_set("states.txt")?,
            countries: read_set("countries.txt")?,
            city_to_state: read_map("city_to_state.tsv")?,
            city_to_country: read_map("city_to_country.tsv")?,
            state_to_country: read_map("state_to_country.tsv")?,
        };
        maps.validate()?;
        Ok(maps)
    }

    /// Where both the direct city->country entry and the composition
    /// city->state->country are defined, they must agree.
    pub fn validate(&self) -> Result<()> {
        for (city, country) in &self.city_to_country {
            if let Some(state) = self.city_to_state.get(city) {
                if let Some(via) = self.state_to_country.get(state) {
                    if via != country {
                        return Err(Error::InvalidConfig(format!(
                            "inconsistent maps: {city} -> {country} but {city} -> {state} -> {via}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Membership lookup after case folding; names in several sets resolve by
/// the precedence city > state > country.
pub fn disambiguate_location(loc: &str, maps: &LocationMaps) -> LocationCategory {
    let key = fold(loc);
    if maps.cities.contains(&key) {
        LocationCategory::City
    } else if maps.states.contains(&key) {
        LocationCategory::State
    } else if maps.countries.contains(&key) {
        LocationCategory::Country
    } else {
        LocationCategory::Unknown
    }
}

/// Map a location to the queried granularity. Upward inference only:
/// city -> state/country (composing through the state when the direct entry
/// is missing) and state -> country; anything else is none.
pub fn infer_location(
    loc: &str,
    target: LocationCategory,
    maps: &LocationMaps,
) -> Option<String> {
    let key = fold(loc);
    let cat = disambiguate_location(loc, maps);
    if cat == LocationCategory::Unknown {
        return None;
    }
    if cat == target {
        return Some(loc.to_string());
    }
    match (cat, target) {
        (LocationCategory::City, LocationCategory::State) => maps.city_to_state.get(&key).cloned(),
        (LocationCategory::City, LocationCategory::Country) => {
            maps.city_to_country.get(&key).cloned().or_else(|| {
                maps.city_to_state
                    .get(&key)
                    .and_then(|s| maps.state_to_country.get(s))
                    .cloned()
            })
        }
        (LocationCategory::State, LocationCategory::Country) => {
            maps.state_to_country.get(&key).cloned()
        }
        _ => None,
    }
}

/// Queried granularity carried by a location slot name, when any.
pub fn location_target(slot: &str) -> Option<LocationCategory> {
    if slot.contains("country") || slot.contains("countries") {
        Some(LocationCategory::Country)
    } else if slot.contains("stateorprovince") || slot.contains("statesorprovinces") {
        Some(LocationCategory::State)
    } else if slot.contains("city") || slot.contains("cities") {
        Some(LocationCategory::City)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(filler: &str, score: f64) -> FillerCandidate {
        FillerCandidate {
            filler: filler.to_string(),
            score,
            sentence_id: "s1".to_string(),
        }
    }

    fn single_spec(threshold: f64) -> SlotSpec {
        SlotSpec {
            slot: "per:date_of_birth".into(),
            single_valued: true,
            top_n: 1,
            base_threshold: threshold,
        }
    }

    fn list_spec(threshold: f64, top_n: usize) -> SlotSpec {
        SlotSpec {
            slot: "org:founded_by".into(),
            single_valued: false,
            top_n,
            base_threshold: threshold,
        }
    }

    #[test]
    fn single_valued_emits_only_the_top_candidate() {
        let out = select_fillers(&[cand("a", 0.7), cand("b", 0.6)], &single_spec(0.5), 0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].filler, "a");
    }

    #[test]
    fn hop_one_raises_the_threshold_by_a_tenth() {
        let out = select_fillers(&[cand("a", 0.55)], &single_spec(0.5), 1);
        assert!(out.is_empty());
        let out = select_fillers(&[cand("a", 0.55)], &single_spec(0.5), 0);
        assert_eq!(out.len(), 1);
        // boundary: score exactly at the effective threshold survives
        let out = select_fillers(&[cand("a", 0.6)], &single_spec(0.5), 1);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn list_valued_caps_at_top_n() {
        let cands = [cand("a", 0.9), cand("b", 0.8), cand("c", 0.7)];
        let out = select_fillers(&cands, &list_spec(0.5, 2), 0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].filler, "a");
        assert_eq!(out[1].filler, "b");
    }

    #[test]
    fn ordering_is_score_desc_then_filler_asc() {
        let cands = [cand("zeta", 0.8), cand("alpha", 0.8), cand("mid", 0.9)];
        let out = select_fillers(&cands, &list_spec(0.5, 3), 0);
        let names: Vec<&str> = out.iter().map(|c| c.filler.as_str()).collect();
        assert_eq!(names, vec!["mid", "alpha", "zeta"]);
    }

    #[test]
    fn raising_the_threshold_never_adds_outputs() {
        let cands = [cand("a", 0.4), cand("b", 0.6), cand("c", 0.8)];
        let mut prev = usize::MAX;
        for t in [0.0, 0.3, 0.5, 0.7, 0.9] {
            let got = select_fillers(&cands, &list_spec(t, 99), 0).len();
            assert!(got <= prev);
            prev = got;
        }
    }

    fn fixture_maps() -> LocationMaps {
        let mut maps = LocationMaps::default();
        for c in ["munich", "springfield", "georgia"] {
            maps.cities.insert(c.into());
        }
        for s in ["bavaria", "illinois"] {
            maps.states.insert(s.into());
        }
        for c in ["germany", "usa", "georgia"] {
            maps.countries.insert(c.into());
        }
        maps.city_to_state.insert("munich".into(), "bavaria".into());
        maps.city_to_state.insert("springfield".into(), "illinois".into());
        maps.city_to_country.insert("munich".into(), "germany".into());
        maps.state_to_country.insert("bavaria".into(), "germany".into());
        maps.state_to_country.insert("illinois".into(), "usa".into());
        maps
    }

    #[test]
    fn disambiguation_uses_membership_and_precedence() {
        let maps = fixture_maps();
        assert_eq!(disambiguate_location("Munich", &maps), LocationCategory::City);
        assert_eq!(disambiguate_location("bavaria", &maps), LocationCategory::State);
        assert_eq!(disambiguate_location("nowhere", &maps), LocationCategory::Unknown);
        // in both the city and country sets: city wins
        assert_eq!(disambiguate_location("Georgia", &maps), LocationCategory::City);
    }

    #[test]
    fn location_inference_goes_upward_only() {
        let maps = fixture_maps();
        assert_eq!(
            infer_location("Munich", LocationCategory::Country, &maps),
            Some("germany".into())
        );
        // composition city -> state -> country when the direct entry is missing
        assert_eq!(
            infer_location("Springfield", LocationCategory::Country, &maps),
            Some("usa".into())
        );
        assert_eq!(
            infer_location("bavaria", LocationCategory::City, &maps),
            None
        );
        assert_eq!(
            infer_location("germany", LocationCategory::City, &maps),
            None
        );
        // identity when the category already matches
        assert_eq!(
            infer_location("Munich", LocationCategory::City, &maps),
            Some("Munich".into())
        );
        assert_eq!(infer_location("atlantis", LocationCategory::Country, &maps), None);
    }

    #[test]
    fn identity_inference_for_every_categorized_name() {
        let maps = fixture_maps();
        for name in ["munich", "bavaria", "germany"] {
            let cat = disambiguate_location(name, &maps);
            assert_eq!(infer_location(name, cat, &maps), Some(name.to_string()));
        }
    }

    #[test]
    fn inconsistent_maps_fail_validation() {
        let mut maps = fixture_maps();
        maps.city_to_country.insert("springfield".into(), "germany".into());
        assert!(maps.validate().is_err());
    }

    #[test]
    fn location_targets_from_slot_names() {
        assert_eq!(location_target("per:country_of_birth"), Some(LocationCategory::Country));
        assert_eq!(location_target("per:cities_of_residence"), Some(LocationCategory::City));
        assert_eq!(
            location_target("org:stateorprovince_of_headquarters"),
            Some(LocationCategory::State)
        );
        assert_eq!(location_target("per:location_of_birth"), None);
        assert_eq!(location_target("per:age"), None);
    }
}
