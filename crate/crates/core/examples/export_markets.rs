//! Write the bundled reference markets to disk as JSON documents.
//!
//! ```text
//! cargo run -p couplematch --example export_markets -- [directory]
//! ```
//!
//! Produces one instance document per reference market plus the split
//! matching that `check-stability` can test against them.

use std::fs;
use std::path::PathBuf;

use couplematch::theorems::{crowding_market, SplitCoupleFamily, ThreeHospitalFamily};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "markets".to_string()),
    );
    fs::create_dir_all(&dir)?;

    let (f_marginal, m_marginal) = ThreeHospitalFamily::marginal_combos()
        .into_iter()
        .next()
        .expect("the family lists its marginal combinations");
    let three = ThreeHospitalFamily::instance(&f_marginal, &m_marginal, 0)
        .expect("the reference completion always samples");
    let split = SplitCoupleFamily::instances([false; 4], 100)
        .expect("the family enumerates")
        .into_iter()
        .next()
        .expect("the family is nonempty");

    let writes = [
        ("crowding.json", crowding_market().to_json()),
        ("three-hospital.json", three.to_json()),
        ("split-couple.json", split.to_json()),
        (
            "split-couple.matching.json",
            SplitCoupleFamily::proposed_matching().to_json(),
        ),
    ];
    for (name, body) in writes {
        let path = dir.join(name);
        fs::write(&path, body + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
