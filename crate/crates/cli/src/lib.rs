//! Library surface of the command-line tool, exposed so integration tests can
//! drive commands directly.

pub mod backend;
pub mod commands;
pub mod config;
pub mod plot;

/// Process exit code for an error: 2 for bad input (missing files, malformed
/// arguments), 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<tspmgs_core::Error>() {
            return match core_err {
                tspmgs_core::Error::Input(_) | tspmgs_core::Error::Io(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}
