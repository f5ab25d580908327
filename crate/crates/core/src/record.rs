//! Publication records and the covariate view shared by fitting and diagnostics.

use serde::{Deserialize, Serialize};

/// One publication: the two predictors and the long-term outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub cohort_year: i32,
    /// Mean citations per publication of the journal.
    pub impact_factor: f64,
    /// Citations received in the appearance year and the year after.
    pub c1: u64,
    /// Citations received from the second year onward.
    pub c_future: u64,
}

/// A record whose counts have been rescaled and are no longer integral,
/// e.g. after mean normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledRecord {
    pub id: String,
    pub impact_factor: f64,
    pub c1: f64,
    pub c_future: f64,
}

/// Read access to the quantities the model consumes.
pub trait Observation {
    fn id(&self) -> &str;
    fn impact_factor(&self) -> f64;
    fn c1(&self) -> f64;
    fn c_future(&self) -> f64;
}

impl Observation for PublicationRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn impact_factor(&self) -> f64 {
        self.impact_factor
    }
    fn c1(&self) -> f64 {
        self.c1 as f64
    }
    fn c_future(&self) -> f64 {
        self.c_future as f64
    }
}

impl Observation for ScaledRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn impact_factor(&self) -> f64 {
        self.impact_factor
    }
    fn c1(&self) -> f64 {
        self.c1
    }
    fn c_future(&self) -> f64 {
        self.c_future
    }
}

impl From<&PublicationRecord> for ScaledRecord {
    fn from(r: &PublicationRecord) -> Self {
        ScaledRecord {
            id: r.id.clone(),
            impact_factor: r.impact_factor,
            c1: r.c1 as f64,
            c_future: r.c_future as f64,
        }
    }
}
