use std::env;
use std::path::PathBuf;

use cbindgen::{Config, EnumConfig, Language, RenameRule};

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");

    let config = Config {
        language: Language::C,
        include_guard: Some("TREECHILD_H".into()),
        sys_includes: vec!["stdbool.h".into(), "stdint.h".into()],
        no_includes: true,
        cpp_compat: true,
        enumeration: EnumConfig {
            rename_variants: RenameRule::QualifiedScreamingSnakeCase,
            ..Default::default()
        },
        ..Default::default()
    };
    cbindgen::generate_with_config(&crate_dir, config)
        .expect("cbindgen failed")
        .write_to_file(crate_dir.join("include").join("treechild.h"));
}
