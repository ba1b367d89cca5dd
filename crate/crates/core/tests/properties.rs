#[path = "common/props.rs"]
mod props;

const CASES: u32 = 256;

fn run(check: fn(u32) -> Result<String, String>) {
    match check(CASES) {
        Ok(line) => println!("{line}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn distribution_matches_recount() {
    run(props::distribution_oracle);
}

#[test]
fn strata_stay_balanced() {
    run(props::stratification);
}

#[test]
fn metrics_ignore_record_order() {
    run(props::permutation_invariance);
}

#[test]
fn classify_match_is_symmetric() {
    run(props::classify_symmetry);
}

#[test]
fn store_round_trips() {
    run(props::persistence_round_trip);
}

#[test]
fn prompts_are_deterministic_and_monotone() {
    run(props::prompt_determinism);
}

#[test]
fn gateway_attempts_are_bounded() {
    run(props::gateway_attempts);
}

#[test]
fn rate_limit_holds_per_window() {
    run(props::rate_limit_window);
}

#[test]
fn selection_payloads_are_blind() {
    run(props::blindness);
}
