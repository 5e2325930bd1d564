use std::time::Instant;

use illumsplat::harness::gradcheck::{gradcheck, GradcheckOptions};

#[test]
fn all_groups_pass_on_ten_seeds() {
    let start = Instant::now();
    let rep = gradcheck(&GradcheckOptions::default());
    println!("{rep}");
    println!("elapsed {:.1?}", start.elapsed());
    assert!(rep.passed());
}
