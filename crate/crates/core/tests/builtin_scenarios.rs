use imsbed_core::harness::{builtin_scenarios, check, render_ladder, run, World};

#[test]
fn every_builtin_matches_its_expectations() {
    for s in builtin_scenarios() {
        let trace = run(&s).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        for (name, result) in check(&s, &trace) {
            if !result.is_match() {
                println!("{}", render_ladder(&trace, &[]));
            }
            assert!(result.is_match(), "{} / {name}: {result:?}", s.name);
        }
    }
}

#[test]
fn builtins_end_quiescent() {
    for s in builtin_scenarios() {
        let mut w = World::new(s.clone()).unwrap();
        w.run_to_quiescence().unwrap();
        assert!(w.is_quiescent(), "{}", s.name);
    }
}
