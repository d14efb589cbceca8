use airidx::format::{encode_rank_data, root_resource, FormatError};
use airidx::query::QueryError;
use airidx::storage::FileBackend;
use airidx::tuner::btree_design;
use airidx::*;

fn tuned(keys: &[Key], profile: &StorageProfile) -> (KeyPositionSet, IndexDesign) {
    let data = to_key_position_set(keys).unwrap();
    let design = airtune(&data, profile, &TuneConfig::default()).unwrap().design;
    (data, design)
}

#[test]
fn file_backed_index_answers_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let keys = gen_gmm(20_000, 10, 5);
    let (_, design) = tuned(&keys, &StorageProfile::affine(1e-5, 1e8).unwrap());
    assert!(design.num_layers() >= 1);
    let data_id = ResourceId::file(dir.path().join("data.bin"));
    let prefix = ResourceId::file(dir.path().join("idx"));
    FileBackend.write(&data_id, &encode_rank_data(&keys).unwrap()).unwrap();
    build_index(&design, &data_id, &prefix, &FileBackend).unwrap();
    let index = BuiltIndex::open(&prefix, &FileBackend).unwrap();
    assert_eq!(index.num_layers(), design.num_layers());
    let cache = PageCache::new(4096, 64);
    for (rank, &k) in keys.iter().enumerate() {
        assert_eq!(lookup(&index, k, &cache, &FileBackend).unwrap().value, rank as u64);
    }
}

#[test]
fn absent_keys_are_reported() {
    let keys: Vec<Key> = (0..5000u64).map(|i| i * 10).collect();
    let data = to_key_position_set(&keys).unwrap();
    let backend = MemBackend::new();
    let design = btree_design(&data, 16, 4096).unwrap();
    backend.write(&ResourceId::mem("d"), &encode_rank_data(&keys).unwrap()).unwrap();
    build_index(&design, &ResourceId::mem("d"), &ResourceId::mem("i"), &backend).unwrap();
    let index = BuiltIndex::open(&ResourceId::mem("i"), &backend).unwrap();
    let cache = PageCache::disabled();
    for x in [5, 49_995, 49_991, u64::MAX - 1] {
        assert!(matches!(lookup(&index, x, &cache, &backend), Err(QueryError::NotFound(k)) if k == x), "{x}");
    }
    assert_eq!(lookup(&index, 49_990, &cache, &backend).unwrap().value, 4999);
}

#[test]
fn warm_lookups_hit_the_cache() {
    let keys = gen_uniform(10_000, 2);
    let (_, design) = tuned(&keys, &StorageProfile::ssd());
    let backend = MemBackend::with_delay_model(StorageProfile::ssd());
    backend.write(&ResourceId::mem("d"), &encode_rank_data(&keys).unwrap()).unwrap();
    build_index(&design, &ResourceId::mem("d"), &ResourceId::mem("i"), &backend).unwrap();
    let index = BuiltIndex::open(&ResourceId::mem("i"), &backend).unwrap();
    let cache = PageCache::new(4096, 1 << 16);
    let x = keys[1234];
    lookup(&index, x, &cache, &backend).unwrap();
    backend.take_reads();
    let again = lookup(&index, x, &cache, &backend).unwrap();
    assert!(again.trace.iter().all(|s| s.cache_hit));
    assert!(backend.take_reads().is_empty());
}

#[test]
fn truncated_root_is_rejected() {
    let keys: Vec<Key> = (0..1000).collect();
    let data = to_key_position_set(&keys).unwrap();
    let design = btree_design(&data, 4, 256).unwrap();
    let backend = MemBackend::new();
    backend.write(&ResourceId::mem("d"), &encode_rank_data(&keys).unwrap()).unwrap();
    build_index(&design, &ResourceId::mem("d"), &ResourceId::mem("i"), &backend).unwrap();
    let root = root_resource(&ResourceId::mem("i"));
    let bytes = backend.read(&root, airidx::storage::ByteRange::new(0, 10)).unwrap();
    backend.write(&root, &bytes).unwrap();
    assert!(matches!(BuiltIndex::open(&ResourceId::mem("i"), &backend), Err(FormatError::Truncated(_) | FormatError::Misaligned { .. })));
}

#[test]
fn tuned_objective_matches_reported_cost_for_step_designs() {
    let keys = gen_gmm(50_000, 20, 9);
    let data = to_key_position_set(&keys).unwrap();
    let profile = StorageProfile::hdd();
    let set = BuilderSet::from_specs(vec![BuilderSpec::GStep { pieces: 16, lambda: 4096 }]).unwrap();
    let config = TuneConfig { builder_set: set, k: 1, ..TuneConfig::default() };
    let result = airtune(&data, &profile, &config).unwrap();
    let exact = expected_cost(&result.design, &data, &profile, &QueryDistribution::Exhaustive).unwrap();
    assert!((result.objective - exact).abs() <= 1e-12 * exact);
}
