//! `selprompt` command line and HTTP surface.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use clap::Parser;
use selprompt_core::analysis::AnalysisError;
use selprompt_core::api::{ApiError, Service};
use selprompt_core::config_space::TaskKind;
use selprompt_core::corpus::{load_dataset, CorpusError};
use selprompt_core::runner::SweepError;

pub mod args;
pub mod commands;
pub mod providers;
pub mod server;

use args::{Cli, Command, ServeArgs};

/// A user-facing failure with its module and exit code.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub code: i32,
    pub message: String,
}

impl Failure {
    /// Bad input or configuration (exit 2).
    pub fn usage(module: &'static str, message: impl fmt::Display) -> Self {
        Failure {
            module,
            code: 2,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn classify(e: &anyhow::Error) -> (&'static str, i32, String) {
    if let Some(f) = e.downcast_ref::<Failure>() {
        return (f.module, f.code, f.message.clone());
    }
    if let Some(s) = e.downcast_ref::<SweepError>() {
        return ("runner", s.exit_code(), s.to_string());
    }
    if let Some(a) = e.downcast_ref::<ApiError>() {
        let code = if a.status < 500 { 2 } else { 1 };
        let module: &'static str = match a.module.as_str() {
            "config-space" => "config-space",
            "corpus" => "corpus",
            "prompting" => "prompting",
            "translation" => "translation",
            "recommend" => "recommend",
            _ => "surface",
        };
        return (module, code, a.message.clone());
    }
    if let Some(a) = e.downcast_ref::<AnalysisError>() {
        return ("analysis", 2, a.to_string());
    }
    if let Some(c) = e.downcast_ref::<CorpusError>() {
        return ("corpus", 2, c.to_string());
    }
    ("cli", 1, format!("{e:#}"))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Sweep(a) => commands::sweep_cmd(a, out),
        Command::Analyze(a) => commands::analyze_cmd(a, out),
        Command::Mine(a) => commands::mine_cmd(a, out),
        Command::Gap(a) => commands::gap_cmd(a, out),
        Command::Recommend(a) => commands::recommend_cmd(a, out),
        Command::GenPrompt(a) => commands::gen_prompt_cmd(a, out),
        Command::MtQuality(a) => commands::mt_quality_cmd(a, out),
        Command::Convert(a) => commands::convert_cmd(a, out),
        Command::Serve(a) => serve(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (module, code, message) = classify(&e);
            let _ = writeln!(err, "error[{module}]: {message}");
            code
        }
    }
}

pub fn service_for(a: &ServeArgs) -> anyhow::Result<Service> {
    let (translator, cache) = providers::translator(&a.translation).map_err(|e| Failure::usage("translation", e))?;
    let mut demo_pool = Vec::new();
    if !a.demos.is_empty() {
        let Some(task) = &a.demos_task else {
            anyhow::bail!(Failure::usage("surface", "--demos needs --demos-task"));
        };
        let task: TaskKind = task.parse().map_err(|e| Failure::usage("config-space", e))?;
        for path in &a.demos {
            demo_pool.extend(load_dataset(path, task)?);
        }
    }
    Ok(Service {
        translator,
        cache,
        demo_pool,
        ..Service::default()
    })
}

fn serve(a: &ServeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let service = Arc::new(service_for(a)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, server::router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
