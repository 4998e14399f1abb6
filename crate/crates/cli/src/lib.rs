//! Command implementations behind the `voxc` binary.

pub mod args;
pub mod commands;
pub mod eval;

use args::{Cli, Command};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenShapes(a) => commands::gen_shapes(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Complete(a) => commands::complete_cmd(a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
    }
}

/// Numerical failures anywhere in the chain map to 3, everything else to 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<voxc_core::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Size the global rayon pool from `VOXC_THREADS`; unset or 0 keeps the
/// hardware default.
pub fn configure_threads(var: Option<&str>) -> anyhow::Result<()> {
    let n = match var.map(str::trim) {
        None | Some("") => 0,
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| voxc_core::Error::invalid(format!("VOXC_THREADS must be a count, got '{s}'")))?,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;
    use voxc_core::Error;

    #[test]
    fn exit_codes() {
        let num: anyhow::Error = Error::StepTooLarge.into();
        assert_eq!(exit_code(&num), EXIT_NUMERICAL);
        let wrapped = Err::<(), _>(Error::DegenerateFit("x".into()))
            .context("scoring")
            .unwrap_err();
        assert_eq!(exit_code(&wrapped), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::EmptyCloud.into()), EXIT_INPUT);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), EXIT_INPUT);
    }

    #[test]
    fn thread_variable() {
        assert!(configure_threads(None).is_ok());
        assert!(configure_threads(Some("0")).is_ok());
        assert!(configure_threads(Some("two")).is_err());
    }
}
