use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Auto-labels drinking glasses in tabletop RGB-D scenes and computes base
/// points, heatmaps and pouring plans.
#[derive(Debug, Parser)]
#[command(name = "glasslabel", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Pipeline configuration (TOML); defaults apply to anything left out.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for plane fitting and synthetic scenes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shell command of a verifier plugin; the built-in mock is used otherwise.
    #[arg(long, global = true, value_name = "CMD")]
    pub plugin_verifier: Option<String>,
    /// Shell command of a segmenter plugin; the built-in mock is used otherwise.
    #[arg(long, global = true, value_name = "CMD")]
    pub plugin_segmenter: Option<String>,
    /// Drop candidates whose verifier call fails.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label a scene directory and write a COCO file.
    Label(commands::LabelArgs),
    /// Re-create labels of one camera in another camera of the rig.
    Project(commands::ProjectArgs),
    /// Render a base-point heatmap from keypoint proposals.
    Heatmap(commands::HeatmapArgs),
    /// Compute the pour point for one annotated glass.
    PourPlan(commands::PourPlanArgs),
    /// Refine a rig camera from marker correspondences.
    Calibrate(commands::CalibrateArgs),
    /// Check a COCO file for integrity violations.
    Validate(commands::ValidateArgs),
    /// Draw annotations (and optionally a heatmap) on an image.
    Overlay(commands::OverlayArgs),
    /// Serve the plugin protocol on stdin/stdout with the built-in mocks.
    MockPlugin,
    /// Run the plugin protocol conformance suite against a plugin command.
    Conformance(commands::ConformanceArgs),
    /// Write a synthetic three-pass scene with ground truth.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match cli.command {
        Command::Label(a) => commands::label(g, a),
        Command::Project(a) => commands::project(g, a),
        Command::Heatmap(a) => commands::heatmap(g, a),
        Command::PourPlan(a) => commands::pour_plan(g, a),
        Command::Calibrate(a) => commands::calibrate(g, a),
        Command::Validate(a) => commands::validate(a),
        Command::Overlay(a) => commands::overlay(g, a),
        Command::MockPlugin => commands::mock_plugin(),
        Command::Conformance(a) => commands::conformance(a),
        Command::Synth(a) => commands::synth(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.kind as u8)
        }
    }
}
