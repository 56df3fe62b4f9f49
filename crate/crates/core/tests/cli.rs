use std::process::{Command, Output};

fn collatz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collatz")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stationary_prints_alternating_weights() {
    let o = collatz(&["stationary", "--m", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    let want: Vec<String> = (0..8).map(|i| format!("{i} {}", if i % 2 == 0 { "1/6" } else { "1/12" })).collect();
    assert_eq!(lines, want);
    assert!(o.stderr.is_empty());
}

#[test]
fn verify_all_level_two_passes() {
    let o = collatz(&["verify", "--all", "--m", "2"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    for needle in ["measure", "stochastic", "stationary", "chapman-kolmogorov", "ergodic", "summary: "] {
        assert!(text.contains(needle), "missing {needle}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn level_zero_is_a_usage_error() {
    let o = collatz(&["matrix", "--m", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(collatz(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn matrix_level_two_is_stochastic_triplets() {
    let o = collatz(&["matrix", "--m", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let mut sums = vec![num_rational::BigRational::from_integer(0.into()); 64];
    for line in stdout(&o).lines() {
        let f: Vec<&str> = line.split(' ').collect();
        let i: usize = f[0].parse().unwrap();
        sums[i] += f[2].parse::<num_rational::BigRational>().unwrap();
    }
    assert!(sums.iter().all(|s| *s == num_rational::BigRational::from_integer(1.into())));
}

#[test]
fn simulate_json_and_csv_agree_on_totals() {
    let csv = stdout(&collatz(&["simulate", "--max", "5000"]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&collatz(&["simulate", "--max", "5000", "--format", "json"]))).unwrap();
    let total = json["total_visits"].as_u64().unwrap();
    assert!(csv.trim_end().ends_with(&format!("total_visits={total}")));
}

#[test]
fn capacity_errors_exit_three() {
    let o = collatz(&["simulate", "--max", "1000", "--m", "9"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
