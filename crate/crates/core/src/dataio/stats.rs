use std::fmt;

use crate::error::{Error, Result};
use crate::minutia::MinutiaType;

use super::Dataset;

/// Minutia type counts observed over the 268 latents of the Guardia Civil
/// casework database, indexed by type code − 1. Total 3376.
pub const GCDB_LATENT_TYPE_COUNTS: [u64; 15] = [1902, 1222, 5, 8, 150, 7, 69, 12, 0, 1, 0, 0, 0, 0, 0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Latents,
    Tenprints,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypeFrequency {
    pub mtype: MinutiaType,
    pub count: u64,
    /// `count / total`.
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeFrequencyTable {
    /// One entry per type code, in code order, including absent types.
    pub entries: Vec<TypeFrequency>,
    pub total: u64,
}

impl TypeFrequencyTable {
    pub fn from_counts(counts: [u64; 15]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Validation("no minutiae in scope".into()));
        }
        let entries = MinutiaType::ALL
            .iter()
            .zip(counts)
            .map(|(&mtype, count)| TypeFrequency {
                mtype,
                count,
                p: count as f64 / total as f64,
            })
            .collect();
        Ok(Self { entries, total })
    }

    /// Types that occur at least once.
    pub fn observed(&self) -> impl Iterator<Item = &TypeFrequency> {
        self.entries.iter().filter(|e| e.count > 0)
    }

    pub fn get(&self, mtype: MinutiaType) -> &TypeFrequency {
        &self.entries[mtype.code() as usize - 1]
    }

    /// Probabilities rounded to four decimals, as printed in reports.
    pub fn rounded_p(&self, mtype: MinutiaType) -> String {
        format!("{:.4}", self.get(mtype).p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,name,probability,count\n");
        for e in self.observed() {
            out.push_str(&format!(
                "{},{},{:.4},{}\n",
                e.mtype.code(),
                e.mtype.name(),
                e.p,
                e.count
            ));
        }
        out
    }
}

impl fmt::Display for TypeFrequencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>3}  {:<15} {:>11}  {:>11}",
            "No", "Minutiae type", "Probability", "Occurrences"
        )?;
        for e in self.observed() {
            writeln!(
                f,
                "{:>3}  {:<15} {:>11.4}  {:>11}",
                e.mtype.code(),
                e.mtype.name(),
                e.p,
                e.count
            )?;
        }
        write!(f, "total minutiae observed = {}", self.total)
    }
}

/// Counts and relative frequencies of every minutia type over all latents or
/// all tenprints of a dataset.
pub fn type_frequencies(dataset: &Dataset, scope: Scope) -> Result<TypeFrequencyTable> {
    let mut counts = [0u64; 15];
    for s in dataset.subjects() {
        let set = match scope {
            Scope::Latents => &s.latent,
            Scope::Tenprints => &s.tenprint,
        };
        for m in set.minutiae() {
            counts[m.mtype.code() as usize - 1] += 1;
        }
    }
    if counts.iter().sum::<u64>() == 0 {
        return Err(Error::Validation(format!("{scope:?} scope contains no minutiae")));
    }
    TypeFrequencyTable::from_counts(counts)
}
