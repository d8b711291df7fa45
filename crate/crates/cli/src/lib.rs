//! Library side of the `esms` binary: layered configuration, run
//! directories, the scenario sweep and the report fold.

pub mod report;
pub mod rundir;
pub mod settings;
pub mod sweep;

/// `git describe`-style stamp baked in at build time.
pub const BUILD_STAMP: &str = env!("ESMS_BUILD_STAMP");

/// Process exit code for an error chain: 2 for a bad configuration key or
/// value, 3 for a missing input file, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use esms_core::ConfigError;
    use std::io::ErrorKind;

    fn from_config(e: &ConfigError) -> u8 {
        match e {
            ConfigError::Io { source, .. } if source.kind() == ErrorKind::NotFound => 3,
            ConfigError::Io { .. } => 1,
            _ => 2,
        }
    }

    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return from_config(e);
        }
        if let Some(e) = cause.downcast_ref::<esms_core::Error>() {
            match e {
                esms_core::Error::Config(c) => return from_config(c),
                esms_core::Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => return 3,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == ErrorKind::NotFound {
                return 3;
            }
        }
        if cause.downcast_ref::<settings::MissingInput>().is_some() {
            return 3;
        }
    }
    1
}
