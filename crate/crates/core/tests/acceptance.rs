//! Runs every headline acceptance criterion and prints one line per
//! criterion. Exits nonzero if any criterion fails.

mod common;

use common::criteria::ALL;

fn main() {
    let mut failed = Vec::new();
    for (name, check) in ALL {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(*name);
            }
        }
    }
    println!("{}/{} criteria pass", ALL.len() - failed.len(), ALL.len());
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
