use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use harmony_core::{Assistant, Interaction};
use serde_json::Value;

use crate::backend::BackendFactory;
use crate::PipelineArgs;

#[derive(clap::Args)]
pub struct ReplArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Where memory, rules and logs/interactions.jsonl live. Without it the
    /// session keeps nothing.
    #[arg(long, env = "HARMONY_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

const HELP: &str = "\
Type anything to talk to the assistant, or:
  /sensor ID VALUE   inject a sensor reading (VALUE is JSON, e.g. true or 29.5)
  /scenario NAME     run a scenario
  /state             show the home
  /rules             list stored rules
  /help              this text
  /quit              leave";

pub fn run(args: ReplArgs) -> anyhow::Result<()> {
    let home = args.pipeline.load_home()?;
    let scenarios = args.pipeline.load_scenarios()?;
    let backend = BackendFactory::from_args(&args.pipeline)?.build();
    let mut assistant = match &args.data_dir {
        Some(dir) => Assistant::open(home, scenarios, backend, dir)?,
        None => Assistant::new(home, scenarios, backend),
    };

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match handle_line(&mut assistant, line) {
            Step::Print(text) => writeln!(out, "{text}")?,
            Step::Quit => break,
        }
        out.flush()?;
    }
    Ok(())
}

enum Step {
    Print(String),
    Quit,
}

fn handle_line(a: &mut Assistant, line: &str) -> Step {
    let Some(cmd) = line.strip_prefix('/') else {
        return Step::Print(render(&a.handle_utterance(line)));
    };
    let (name, rest) = cmd.split_once(' ').unwrap_or((cmd, ""));
    let rest = rest.trim();
    Step::Print(match name {
        "quit" | "exit" => return Step::Quit,
        "help" => HELP.to_string(),
        "state" => a.home().snapshot_inventory().trim_end().to_string(),
        "rules" => {
            let rules: Vec<String> = a
                .memory()
                .rules()
                .map(|r| format!("rule {}: when {} ({} steps)", r.id, r.trigger.describe(), r.plan.steps.len()))
                .collect();
            if rules.is_empty() {
                "no rules".to_string()
            } else {
                rules.join("\n")
            }
        }
        "scenario" => match a.run_scenario(rest) {
            Some(i) => render(&i),
            None => format!("unknown scenario {rest:?}"),
        },
        "sensor" => {
            let (id, raw) = rest.split_once(' ').unwrap_or((rest, ""));
            match serde_json::from_str::<Value>(raw.trim()) {
                Err(e) => format!("bad value {raw:?}: {e}"),
                Ok(v) => match a.handle_sensor(id, &v) {
                    Ok(i) => render(&i),
                    Err(e) => format!("error: {e}"),
                },
            }
        }
        other => format!("unknown command /{other}; try /help"),
    })
}

fn render(i: &Interaction) -> String {
    let mut s = format!("[{}] {}", i.conversation_id, i.reply);
    for c in &i.commands {
        s.push_str(&format!("\n  -> {c}"));
    }
    s
}
