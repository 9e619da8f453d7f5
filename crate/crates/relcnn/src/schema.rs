//! Merged slot schema: the 22 classification labels, the map from original
//! TAC slot names onto (merged label, argument orientation), the inverse-slot
//! pairing, and the expected argument types per merged label.
//!
//! One model serves a slot and its inverse: inverse-oriented originals are
//! answered by reversing the argument tags of the example and reading the
//! canonical label. The three location granularities (city, state-or-province,
//! country) fold into one location label each.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const NUM_TYPES: usize = 6;

/// Coarse argument types used across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityType {
    Person = 0,
    Organization = 1,
    Location = 2,
    Date = 3,
    Number = 4,
    Other = 5,
}

impl EntityType {
    pub const ALL: [EntityType; NUM_TYPES] = [
        EntityType::Person,
        EntityType::Organization,
        EntityType::Location,
        EntityType::Date,
        EntityType::Number,
        EntityType::Other,
    ];

    pub fn parse(s: &str) -> Result<EntityType> {
        match s {
            "PERSON" => Ok(EntityType::Person),
            "ORGANIZATION" => Ok(EntityType::Organization),
            "LOCATION" => Ok(EntityType::Location),
            "DATE" => Ok(EntityType::Date),
            "NUMBER" => Ok(EntityType::Number),
            "O" | "-" => Ok(EntityType::Other),
            other => Err(Error::InvalidLabel(format!("unknown entity type {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Organization => "ORGANIZATION",
            EntityType::Location => "LOCATION",
            EntityType::Date => "DATE",
            EntityType::Number => "NUMBER",
            EntityType::Other => "O",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<EntityType> {
        EntityType::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidLabel(format!("entity type index {i}")))
    }

    /// One-hot indicator vector.
    pub fn one_hot(self) -> [f64; NUM_TYPES] {
        let mut v = [0.0; NUM_TYPES];
        v[self.index()] = 1.0;
        v
    }
}

/// Set of entity types as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeSet(u8);

impl TypeSet {
    pub fn of(types: &[EntityType]) -> TypeSet {
        let mut m = 0u8;
        for t in types {
            m |= 1 << t.index();
        }
        TypeSet(m)
    }

    pub fn contains(self, t: EntityType) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn multi_hot(self) -> [f64; NUM_TYPES] {
        let mut v = [0.0; NUM_TYPES];
        for t in EntityType::ALL {
            if self.contains(t) {
                v[t.index()] = 1.0;
            }
        }
        v
    }
}

use EntityType::{Date, Location, Number, Organization as Org, Other, Person as Per};

struct MergedDef {
    name: &'static str,
    arg1: &'static [EntityType],
    arg2: &'static [EntityType],
}

const MERGED: [MergedDef; 22] = [
    MergedDef { name: "per:age", arg1: &[Per], arg2: &[Number] },
    MergedDef { name: "per:alternate_names", arg1: &[Per], arg2: &[Per] },
    MergedDef { name: "per:cause_of_death", arg1: &[Per], arg2: &[Other] },
    MergedDef { name: "per:children", arg1: &[Per], arg2: &[Per] },
    MergedDef { name: "per:date_of_birth", arg1: &[Per], arg2: &[Date] },
    MergedDef { name: "per:date_of_death", arg1: &[Per], arg2: &[Date] },
    MergedDef { name: "per:employee_or_member_of", arg1: &[Per], arg2: &[Org, Location] },
    MergedDef { name: "per:location_of_birth", arg1: &[Per], arg2: &[Location] },
    MergedDef { name: "per:loc_of_death", arg1: &[Per], arg2: &[Location] },
    MergedDef { name: "per:loc_of_residence", arg1: &[Per], arg2: &[Location] },
    MergedDef { name: "per:origin", arg1: &[Per], arg2: &[Location, Other] },
    MergedDef { name: "per:schools_attended", arg1: &[Per], arg2: &[Org] },
    MergedDef { name: "per:siblings", arg1: &[Per], arg2: &[Per] },
    MergedDef { name: "per:spouse", arg1: &[Per], arg2: &[Per] },
    MergedDef { name: "per:title", arg1: &[Per], arg2: &[Other] },
    MergedDef { name: "org:alternate_names", arg1: &[Org], arg2: &[Org] },
    MergedDef { name: "org:loc_of_headquarters", arg1: &[Org], arg2: &[Location] },
    MergedDef { name: "org:date_founded", arg1: &[Org], arg2: &[Date] },
    MergedDef { name: "org:founded_by", arg1: &[Org], arg2: &[Per, Org, Location] },
    MergedDef { name: "org:members", arg1: &[Org], arg2: &[Org, Location] },
    MergedDef { name: "org:parents", arg1: &[Org], arg2: &[Org, Location] },
    MergedDef { name: "org:top_members_employees", arg1: &[Org], arg2: &[Per] },
];

/// original slot name -> (merged label, answered by reversing the tags?)
const ORIGINAL: [(&str, &str, bool); 54] = [
    ("per:age", "per:age", false),
    ("per:alternate_names", "per:alternate_names", false),
    ("per:cause_of_death", "per:cause_of_death", false),
    ("per:children", "per:children", false),
    ("per:parents", "per:children", true),
    ("per:date_of_birth", "per:date_of_birth", false),
    ("per:date_of_death", "per:date_of_death", false),
    ("per:employee_or_member_of", "per:employee_or_member_of", false),
    ("org:employees_or_members", "per:employee_or_member_of", true),
    ("gpe:employees_or_members", "per:employee_or_member_of", true),
    ("per:city_of_birth", "per:location_of_birth", false),
    ("per:country_of_birth", "per:location_of_birth", false),
    ("per:stateorprovince_of_birth", "per:location_of_birth", false),
    ("gpe:births_in_city", "per:location_of_birth", true),
    ("gpe:births_in_country", "per:location_of_birth", true),
    ("gpe:births_in_stateorprovince", "per:location_of_birth", true),
    ("per:city_of_death", "per:loc_of_death", false),
    ("per:country_of_death", "per:loc_of_death", false),
    ("per:stateorprovince_of_death", "per:loc_of_death", false),
    ("gpe:deaths_in_city", "per:loc_of_death", true),
    ("gpe:deaths_in_country", "per:loc_of_death", true),
    ("gpe:deaths_in_stateorprovince", "per:loc_of_death", true),
    ("per:cities_of_residence", "per:loc_of_residence", false),
    ("per:countries_of_residence", "per:loc_of_residence", false),
    ("per:statesorprovinces_of_residence", "per:loc_of_residence", false),
    ("gpe:residents_of_city", "per:loc_of_residence", true),
    ("gpe:residents_of_country", "per:loc_of_residence", true),
    ("gpe:residents_of_stateorprovince", "per:loc_of_residence", true),
    ("per:origin", "per:origin", false),
    ("per:schools_attended", "per:schools_attended", false),
    ("org:students", "per:schools_attended", true),
    ("per:siblings", "per:siblings", false),
    ("per:spouse", "per:spouse", false),
    ("per:title", "per:title", false),
    ("org:alternate_names", "org:alternate_names", false),
    ("org:city_of_headquarters", "org:loc_of_headquarters", false),
    ("org:country_of_headquarters", "org:loc_of_headquarters", false),
    ("org:stateorprovince_of_headquarters", "org:loc_of_headquarters", false),
    ("gpe:headquarters_in_city", "org:loc_of_headquarters", true),
    ("gpe:headquarters_in_country", "org:loc_of_headquarters", true),
    ("gpe:headquarters_in_stateorprovince", "org:loc_of_headquarters", true),
    ("org:date_founded", "org:date_founded", false),
    ("org:founded_by", "org:founded_by", false),
    ("per:organizations_founded", "org:founded_by", true),
    ("org:organizations_founded", "org:founded_by", true),
    ("gpe:organizations_founded", "org:founded_by", true),
    ("org:members", "org:members", false),
    ("org:member_of", "org:members", true),
    ("gpe:member_of", "org:members", true),
    ("org:parents", "org:parents", false),
    ("org:subsidiaries", "org:parents", true),
    ("gpe:subsidiaries", "org:parents", true),
    ("org:top_members_employees", "org:top_members_employees", false),
    ("per:top_member_employee_of", "org:top_members_employees", true),
];

/// Canonical <-> inverse reading pairs; symmetric slots pair with themselves.
const INVERSE_PAIRS: [(&str, &str); 21] = [
    ("per:children", "per:parents"),
    ("per:employee_or_member_of", "org:employees_or_members"),
    ("per:schools_attended", "org:students"),
    ("org:founded_by", "per:organizations_founded"),
    ("org:members", "org:member_of"),
    ("org:parents", "org:subsidiaries"),
    ("org:top_members_employees", "per:top_member_employee_of"),
    ("per:city_of_birth", "gpe:births_in_city"),
    ("per:country_of_birth", "gpe:births_in_country"),
    ("per:stateorprovince_of_birth", "gpe:births_in_stateorprovince"),
    ("per:city_of_death", "gpe:deaths_in_city"),
    ("per:country_of_death", "gpe:deaths_in_country"),
    ("per:stateorprovince_of_death", "gpe:deaths_in_stateorprovince"),
    ("per:cities_of_residence", "gpe:residents_of_city"),
    ("per:countries_of_residence", "gpe:residents_of_country"),
    ("per:statesorprovinces_of_residence", "gpe:residents_of_stateorprovince"),
    ("org:city_of_headquarters", "gpe:headquarters_in_city"),
    ("org:country_of_headquarters", "gpe:headquarters_in_country"),
    ("org:stateorprovince_of_headquarters", "gpe:headquarters_in_stateorprovince"),
    ("per:spouse", "per:spouse"),
    ("per:siblings", "per:siblings"),
];

/// Label string of the artificial negative class.
pub const N_LABEL: &str = "N";

#[derive(Debug, Clone)]
pub struct SlotSchema {
    merged_names: Vec<String>,
    merged_types: Vec<(TypeSet, TypeSet)>,
    original: HashMap<String, (usize, bool)>,
    inverse: HashMap<String, String>,
}

impl SlotSchema {
    /// The merged TAC KBP slot inventory.
    pub fn tac_kbp() -> SlotSchema {
        let merged_names: Vec<String> = MERGED.iter().map(|m| m.name.to_string()).collect();
        let merged_types: Vec<(TypeSet, TypeSet)> = MERGED
            .iter()
            .map(|m| (TypeSet::of(m.arg1), TypeSet::of(m.arg2)))
            .collect();
        let name_to_id: HashMap<&str, usize> = MERGED
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name, i))
            .collect();
        let mut original = HashMap::new();
        for (orig, merged, reversed) in ORIGINAL {
            original.insert(orig.to_string(), (name_to_id[merged], reversed));
        }
        let mut inverse = HashMap::new();
        for (a, b) in INVERSE_PAIRS {
            inverse.insert(a.to_string(), b.to_string());
            inverse.insert(b.to_string(), a.to_string());
        }
        SlotSchema {
            merged_names,
            merged_types,
            original,
            inverse,
        }
    }

    pub fn num_merged(&self) -> usize {
        self.merged_names.len()
    }

    /// Class index of the artificial negative class.
    pub fn n_class(&self) -> usize {
        self.merged_names.len()
    }

    /// Merged slots plus N.
    pub fn num_classes(&self) -> usize {
        self.merged_names.len() + 1
    }

    pub fn merged_name(&self, id: usize) -> &str {
        if id == self.n_class() {
            N_LABEL
        } else {
            &self.merged_names[id]
        }
    }

    pub fn merged_id(&self, name: &str) -> Option<usize> {
        self.merged_names.iter().position(|n| n == name)
    }

    /// Resolve a queried slot name (original or merged) to its merged label
    /// id and whether the example must be tag-reversed to read it.
    pub fn resolve(&self, slot: &str) -> Result<(usize, bool)> {
        if let Some(&(id, rev)) = self.original.get(slot) {
            return Ok((id, rev));
        }
        if let Some(id) = self.merged_id(slot) {
            return Ok((id, false));
        }
        Err(Error::UncoveredSlot(slot.to_string()))
    }

    /// Merged label of an original slot name.
    pub fn merge_slot(&self, original: &str) -> Result<&str> {
        let (id, _) = self.resolve(original)?;
        Ok(&self.merged_names[id])
    }

    /// The inverse reading of a slot, where one is defined; symmetric slots
    /// return themselves.
    pub fn inverse_slot(&self, slot: &str) -> Option<&str> {
        self.inverse.get(slot).map(|s| s.as_str())
    }

    /// Is this merged label its own inverse (per:spouse, per:siblings)?
    /// Such slots must score an example and its tag reversal identically.
    pub fn is_self_inverse(&self, merged_id: usize) -> bool {
        let name = &self.merged_names[merged_id];
        self.inverse.get(name).map(|v| v == name).unwrap_or(false)
    }

    pub fn expected_types(&self, merged_id: usize) -> (TypeSet, TypeSet) {
        self.merged_types[merged_id]
    }

    /// Multi-hot expected-argument-type vectors for a covered slot.
    pub fn slot_type_vectors(&self, slot: &str) -> Result<([f64; NUM_TYPES], [f64; NUM_TYPES])> {
        let (id, reversed) = self.resolve(slot)?;
        let (t1, t2) = self.merged_types[id];
        if reversed {
            Ok((t2.multi_hot(), t1.multi_hot()))
        } else {
            Ok((t1.multi_hot(), t2.multi_hot()))
        }
    }

    pub fn merged_names(&self) -> impl Iterator<Item = &str> {
        self.merged_names.iter().map(|s| s.as_str())
    }
}
