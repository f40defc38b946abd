mod support;

#[test]
fn bandit_prefers_better_arm() {
    let c = support::check_bandit();
    eprintln!("{}", c.detail);
    assert!(c.ok, "{}", c.detail);
}

#[test]
fn tiny_allocation_mdp_near_optimal() {
    let c = support::check_tiny_mdp();
    eprintln!("{}", c.detail);
    assert!(c.ok, "{}", c.detail);
}
