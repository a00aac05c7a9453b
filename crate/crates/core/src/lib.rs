pub mod asymptotics;
pub mod conv;
pub mod error;
pub mod harness;
pub mod interarrival;
pub mod numeric;
pub mod rare_event;
pub mod renewal_exact;
pub mod sv_func;
mod tail;
mod tilt;

pub use conv::Backend;
pub use error::{Error, Result};
pub use interarrival::{DistSpec, Family, InterArrival, LaplacePair, TailValue};
pub use renewal_exact::{KStepOptions, KStepTable, RenewalTable};
pub use sv_func::{ConjugateSv, SvExpr, SvFunc};
