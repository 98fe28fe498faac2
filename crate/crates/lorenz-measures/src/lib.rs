pub mod chart;
pub mod error;
pub mod ext;
pub mod fixtures;
pub mod induced;
pub mod map;
pub mod measures;
pub mod orbit;
pub mod perturbation;
pub mod recurrence;
pub mod zeta;

pub use chart::Chart;
pub use error::{Error, Result};
pub use map::{metric_dist, LorenzMap, MapDocument, NonFlatBounds, Side};
pub use orbit::{Itinerary, OrbitRecord};

// the guide's examples compile and run as doctests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/orbits.md")]
    mod orbits {}
    #[doc = include_str!("../../../book/src/recurrence.md")]
    mod recurrence {}
    #[doc = include_str!("../../../book/src/induced.md")]
    mod induced {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/precision.md")]
    mod precision {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
