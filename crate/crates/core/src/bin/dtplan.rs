use std::collections::BTreeSet;
use std::io::Read;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dtplan_core::abstraction::{
    initial_partition, project_abstract, quotient, refine_partition, regression_plan,
    relevant_closure, strips_operators, SubgoalSet,
};
use dtplan_core::chain::{classify_chain, induce_chain};
use dtplan_core::dp::{
    evaluate_policy_exact, evaluate_policy_iterative, modified_policy_iteration, policy_iteration,
    vi_discounted, vi_finite, EvalStop,
};
use dtplan_core::events::compile_implicit_action;
use dtplan_core::factored::{ground, FactoredMdp};
use dtplan_core::io::{
    emit_chain_structure, emit_factored, emit_finite_solution, emit_flat, emit_interval_tree,
    emit_partition, emit_policy, emit_policy_tree, emit_trajectory, emit_value_tree, emit_values,
    fmt_real, looks_factored, parse_factored, parse_flat_document, parse_policy, FlatDocument,
};
use dtplan_core::mdp::{simulate_policy, validate_mdp, Criterion, FlatMdp, StationaryPolicy};
use dtplan_core::search::{expectimax, plan_execute_loop, reachable_set, restrict_mdp};
use dtplan_core::svi::{
    midpoint_policy, prune_value_tree, structured_value_iteration, to_intervals, PruneBudget, SviStop,
};
use dtplan_core::Error;

/// Planning and analysis for Markov decision processes.
#[derive(Parser)]
#[command(name = "dtplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArg {
    /// Model file, flat or factored (`-` reads standard input).
    model: String,
}

#[derive(Args)]
struct CriterionArgs {
    /// Finite horizon; overrides the model's criterion.
    #[arg(long, conflicts_with = "discount")]
    horizon: Option<usize>,
    /// Discount factor; overrides the model's criterion.
    #[arg(long)]
    discount: Option<f64>,
    /// Optimality tolerance for discounted iteration.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Vi,
    ViFinite,
    Pi,
    Mpi,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a model.
    Validate(ModelArg),
    /// Compute an optimal policy and its values.
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "vi")]
        method: Method,
        #[command(flatten)]
        criterion: CriterionArgs,
        /// Partial evaluation sweeps for modified policy iteration.
        #[arg(long, default_value_t = 5)]
        m: usize,
    },
    /// Value of a fixed stationary policy.
    Evaluate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        policy: String,
        /// Solve the linear system directly (the default).
        #[arg(long, conflicts_with = "iters")]
        exact: bool,
        /// Use this many successive-approximation sweeps instead.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        discount: Option<f64>,
    },
    /// Sample a trajectory under a policy.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        policy: String,
        #[arg(long)]
        start: String,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recurrent, transient and absorbing states of a policy's chain.
    Classify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Fold a flat model's exogenous events into its actions.
    ComposeEvents(ModelArg),
    /// Enumerate a factored model into a flat one.
    Ground(ModelArg),
    /// Structured value iteration on a factored model.
    Svi {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        criterion: CriterionArgs,
        #[arg(long, conflicts_with = "prune_span")]
        prune_leaves: Option<usize>,
        #[arg(long)]
        prune_span: Option<f64>,
    },
    /// Project a factored model onto the variables relevant to a seed set.
    Abstract {
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated seed variables (default: every reward variable).
        #[arg(long, value_delimiter = ',')]
        seed_vars: Vec<String>,
    },
    /// Coarsest stable partition and the aggregate model.
    Minimize {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Goal regression over deterministic operators.
    Regress {
        #[command(flatten)]
        model: ModelArg,
        /// Initial state as `X=v,Y=w,...`.
        #[arg(long)]
        init: String,
        /// Goal literals as `X=v,...`.
        #[arg(long)]
        goal: String,
        #[arg(long, default_value_t = 16)]
        depth: usize,
    },
    /// States reachable from a start set.
    Reach {
        #[command(flatten)]
        model: ModelArg,
        /// Start state; repeat for a start set.
        #[arg(long, required = true)]
        start: Vec<String>,
        /// Print the model restricted to the reachable states.
        #[arg(long)]
        restrict: bool,
    },
    /// Depth-limited expectimax search, optionally executed online.
    Search {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        start: String,
        #[arg(long)]
        depth: usize,
        /// Alternate search and execution for this many steps.
        #[arg(long)]
        execute: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Diagnostics(String),
    NoSolution(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular | Error::NoConvergence { .. } | Error::Unstable(_) => {
                Failure::Internal(e.to_string())
            }
            _ => Failure::Diagnostics(e.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

enum Model {
    Flat(FlatDocument),
    Factored(FactoredMdp),
}

impl Model {
    fn flat(self) -> Result<FlatMdp, Failure> {
        match self {
            Model::Flat(doc) => Ok(doc.mdp),
            Model::Factored(f) => Ok(ground(&f)?),
        }
    }

    fn factored(self) -> Result<FactoredMdp, Failure> {
        match self {
            Model::Factored(f) => Ok(f),
            Model::Flat(_) => Err(Failure::Diagnostics("this command needs a factored model".into())),
        }
    }
}

fn read_text(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::Diagnostics(format!("standard input: {e}")))?;
        Ok(text)
    } else {
        std::fs::read_to_string(path).map_err(|e| Failure::Diagnostics(format!("{path}: {e}")))
    }
}

fn load(arg: &ModelArg) -> Result<Model, Failure> {
    let text = read_text(&arg.model)?;
    let located = |e: Error| Failure::Diagnostics(format!("{}: {e}", arg.model));
    if looks_factored(&text) {
        parse_factored(&text).map(Model::Factored).map_err(located)
    } else {
        parse_flat_document(&text).map(Model::Flat).map_err(located)
    }
}

fn load_policy(mdp: &FlatMdp, path: &str) -> Result<StationaryPolicy, Failure> {
    let text = read_text(path)?;
    parse_policy(mdp, &text).map_err(|e| Failure::Diagnostics(format!("{path}: {e}")))
}

fn criterion(args: &CriterionArgs, model: Option<Criterion>) -> Result<Criterion, Failure> {
    match (args.horizon, args.discount, model) {
        (Some(t), _, _) => Ok(Criterion::FiniteHorizon(t)),
        (_, Some(g), _) => Ok(Criterion::Discounted(g)),
        (_, _, Some(c)) => Ok(c),
        _ => Err(Failure::Diagnostics("no criterion: give --horizon or --discount".into())),
    }
}

fn discount_of(mdp: &FlatMdp, flag: Option<f64>) -> Result<f64, Failure> {
    match (flag, mdp.criterion) {
        (Some(g), _) => Ok(g),
        (None, Some(Criterion::Discounted(g))) => Ok(g),
        _ => Err(Failure::Diagnostics("no discount factor: give --discount".into())),
    }
}

fn stationary_report(mdp: &FlatMdp, values: &dtplan_core::mdp::ValueFunction, policy: &StationaryPolicy) -> String {
    format!("values\n{}policy\n{}", emit_values(mdp, values), emit_policy(mdp, policy))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate(arg) => match load(&arg)? {
            Model::Flat(doc) => {
                let report = validate_mdp(&doc.mdp);
                if !report.is_empty() {
                    return Err(Failure::Diagnostics(report.to_string()));
                }
                Ok(format!(
                    "ok: {} states, {} actions, {} events\n",
                    doc.mdp.n_states(),
                    doc.mdp.n_actions(),
                    doc.events.len()
                ))
            }
            Model::Factored(f) => {
                f.validate()?;
                Ok(format!(
                    "ok: {} variables, {} states, {} actions\n",
                    f.variables.len(),
                    f.state_count(),
                    f.actions.len()
                ))
            }
        },
        Command::Solve { model, method, criterion: args, m } => {
            let mdp = load(&model)?.flat()?;
            let crit = criterion(&args, mdp.criterion)?;
            match (method, crit) {
                (Method::ViFinite, Criterion::FiniteHorizon(t)) | (Method::Vi, Criterion::FiniteHorizon(t)) => {
                    Ok(emit_finite_solution(&mdp, &vi_finite(&mdp, t)))
                }
                (Method::ViFinite, Criterion::Discounted(_)) => {
                    Err(Failure::Diagnostics("vi-finite needs a horizon".into()))
                }
                (_, Criterion::FiniteHorizon(_)) => {
                    Err(Failure::Diagnostics("this method needs a discount factor".into()))
                }
                (Method::Vi, Criterion::Discounted(g)) => {
                    let sol = vi_discounted(&mdp, g, args.eps)?;
                    Ok(stationary_report(&mdp, &sol.values, &sol.policy))
                }
                (Method::Pi, Criterion::Discounted(g)) => {
                    let sol = policy_iteration(&mdp, g, &StationaryPolicy::uniform(mdp.n_states(), 0))?;
                    Ok(stationary_report(&mdp, &sol.values, &sol.policy))
                }
                (Method::Mpi, Criterion::Discounted(g)) => {
                    let sol = modified_policy_iteration(&mdp, g, m, args.eps)?;
                    Ok(stationary_report(&mdp, &sol.values, &sol.policy))
                }
            }
        }
        Command::Evaluate { model, policy, exact: _, iters, discount } => {
            let mdp = load(&model)?.flat()?;
            let pi = load_policy(&mdp, &policy)?;
            let g = discount_of(&mdp, discount)?;
            let values = match iters {
                Some(k) => evaluate_policy_iterative(&mdp, &pi, g, EvalStop::Iterations(k))?,
                None => evaluate_policy_exact(&mdp, &pi, g)?,
            };
            Ok(emit_values(&mdp, &values))
        }
        Command::Simulate { model, policy, start, steps, seed } => {
            let mdp = load(&model)?.flat()?;
            let pi = load_policy(&mdp, &policy)?;
            let s = mdp.state_index(&start)?;
            Ok(emit_trajectory(&mdp, &simulate_policy(&mdp, &pi, s, steps, seed)))
        }
        Command::Classify { model, policy, eps } => {
            let mdp = load(&model)?.flat()?;
            let pi = load_policy(&mdp, &policy)?;
            Ok(emit_chain_structure(&mdp, &classify_chain(&induce_chain(&mdp, &pi), eps)))
        }
        Command::ComposeEvents(arg) => match load(&arg)? {
            Model::Flat(doc) => {
                let mut mdp = doc.mdp;
                for action in &mut mdp.actions {
                    *action = compile_implicit_action(action, &doc.events)?;
                }
                Ok(emit_flat(&mdp))
            }
            Model::Factored(_) => Err(Failure::Diagnostics(
                "factored models carry no separate events".into(),
            )),
        },
        Command::Ground(arg) => Ok(emit_flat(&load(&arg)?.flat()?)),
        Command::Svi { model, criterion: args, prune_leaves, prune_span } => {
            let f = load(&model)?.factored()?;
            let stop = match criterion(&args, f.criterion)? {
                Criterion::FiniteHorizon(t) => SviStop::Horizon(t),
                Criterion::Discounted(gamma) => SviStop::Discounted { gamma, eps: args.eps },
            };
            let result = structured_value_iteration(&f, stop)?;
            let budget = match (prune_leaves, prune_span) {
                (Some(n), _) => Some(PruneBudget::MaxLeaves(n)),
                (_, Some(d)) => Some(PruneBudget::Span(d)),
                _ => None,
            };
            let mut out = format!("iterations {}\n", result.iterations);
            match budget {
                None => {
                    out.push_str(&format!("value\n{}\n", emit_value_tree(&f, &result.value)));
                    out.push_str(&format!("policy\n{}\n", emit_policy_tree(&f, &result.policy)));
                }
                Some(budget) => {
                    let (pruned, width) = prune_value_tree(&to_intervals(&result.value), budget, &f.domains())?;
                    let gamma = match stop {
                        SviStop::Discounted { gamma, .. } => gamma,
                        SviStop::Horizon(_) => 1.0,
                    };
                    let policy = midpoint_policy(&f, &pruned, gamma)?;
                    out.push_str(&format!("width {}\n", fmt_real(width)));
                    out.push_str(&format!("value\n{}\n", emit_interval_tree(&f, &pruned)));
                    out.push_str(&format!("policy\n{}\n", emit_policy_tree(&f, &policy)));
                }
            }
            Ok(out)
        }
        Command::Abstract { model, seed_vars } => {
            let f = load(&model)?.factored()?;
            let seed: BTreeSet<usize> = if seed_vars.is_empty() {
                dtplan_core::abstraction::reward_variables(&f)
            } else {
                seed_vars.iter().map(|v| f.var_index(v.trim())).collect::<Result<_, _>>()?
            };
            let keep = relevant_closure(&f, &seed)?;
            let names: Vec<&str> = keep.iter().map(|&v| f.variables[v].name.as_str()).collect();
            let small = project_abstract(&f, &keep)?;
            Ok(format!(
                "; relevant: {}\n; states: {} -> {}\n{}",
                names.join(" "),
                f.state_count(),
                small.state_count(),
                emit_factored(&small)
            ))
        }
        Command::Minimize { model, tol } => {
            let mdp = load(&model)?.flat()?;
            let p = refine_partition(&mdp, &initial_partition(&mdp, tol), tol)?;
            let q = quotient(&mdp, &p, tol)?;
            Ok(format!("# blocks\n{}\n# quotient\n{}", emit_partition(&mdp, &p), emit_flat(&q)))
        }
        Command::Regress { model, init, goal, depth } => {
            let f = load(&model)?.factored()?;
            let ops = strips_operators(&f)?;
            let mut state = vec![None; f.variables.len()];
            for (v, x) in f.parse_assignment(&init)? {
                state[v] = Some(x);
            }
            let state: Vec<usize> = state
                .iter()
                .enumerate()
                .map(|(v, x)| x.ok_or_else(|| Failure::Diagnostics(format!("--init leaves `{}` unset", f.variables[v].name))))
                .collect::<Result<_, _>>()?;
            let goal = SubgoalSet::new(f.parse_assignment(&goal)?)?;
            let plan = regression_plan(&ops, &state, &goal, depth)
                .ok_or_else(|| Failure::NoSolution(format!("no plan within depth {depth}")))?;
            let mut out = String::from("plan\n");
            for &k in &plan.ops {
                out.push_str(&format!("  {}\n", ops[k].name));
            }
            out.push_str("subgoals\n");
            for (k, sg) in plan.subgoals.iter().enumerate() {
                let lits: Vec<String> = sg
                    .literals
                    .iter()
                    .map(|(&v, &x)| format!("{}={}", f.variables[v].name, f.variables[v].domain[x]))
                    .collect();
                out.push_str(&format!("  {k} : {}\n", lits.join(",")));
            }
            Ok(out)
        }
        Command::Reach { model, start, restrict } => {
            let mdp = load(&model)?.flat()?;
            let init = start.iter().map(|s| mdp.state_index(s.trim())).collect::<Result<BTreeSet<_>, _>>()?;
            let reach = reachable_set(&mdp, &init)?;
            if restrict {
                let (sub, _) = restrict_mdp(&mdp, &reach)?;
                Ok(emit_flat(&sub))
            } else {
                Ok(reach.iter().map(|&s| format!("{}\n", mdp.states[s])).collect())
            }
        }
        Command::Search { model, start, depth, execute, seed } => {
            let mdp = load(&model)?.flat()?;
            let s = mdp.state_index(&start)?;
            match execute {
                Some(steps) => Ok(emit_trajectory(&mdp, &plan_execute_loop(&mdp, s, depth, steps, seed, None)?)),
                None => {
                    let (value, action, tree) = expectimax(&mdp, s, depth, None)?;
                    let action = action.map_or("none", |a| mdp.actions[a].name.as_str());
                    Ok(format!(
                        "value : {}\naction : {action}\nnodes : {}\n",
                        fmt_real(value),
                        tree.node_count()
                    ))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(cli.command))
        .unwrap_or_else(|_| Err(Failure::Internal("internal error".into())));
    match outcome {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Diagnostics(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NoSolution(msg)) => {
            eprintln!("no solution: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
