//! The problem files under `tests/fixtures/` are the core fixtures written
//! out. `PWACERT_BLESS=1 cargo test --test corpus` regenerates them.

mod common;

use common::{corpus, fixture_path};
use pwacert::{load_problem, ProblemDocument, ProblemOptions};

#[test]
fn corpus_matches_core_fixtures() {
    let bless = std::env::var_os("PWACERT_BLESS").is_some();
    for (name, problem) in corpus() {
        let text = ProblemDocument::from_problem(&problem, &ProblemOptions::default()).to_json() + "\n";
        let path = fixture_path(name);
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, text, "{name} is stale");
        // And it loads back to the same problem.
        let loaded = load_problem(&path).unwrap();
        assert_eq!(loaded.safety.network.layers(), problem.network.layers());
        assert_eq!(loaded.safety.system, problem.system);
        assert_eq!(loaded.safety.safe, problem.safe);
        assert_eq!(loaded.safety.obstacles, problem.obstacles);
    }
}
