//! Selective-scan state-space machinery: the 1-D recurrence, its
//! four-direction 2-D extension, and the VSSMB block wrapping it.

pub mod oracle;
pub mod params;
pub mod scan;
pub mod ss2d;
pub mod vssmb;

pub use params::SsmParams;
pub use ss2d::{MergeMode, ScanDirection};
pub use vssmb::Vssmb;
