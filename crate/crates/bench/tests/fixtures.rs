use ired_bench::{fixture, tasks};

#[test]
fn fixtures_match_their_tasks() {
    for (name, kind, arch, width, depth) in tasks() {
        let (model, data) = fixture(kind, arch, width, depth, 4);
        assert_eq!(data.len(), 4, "{name}");
        for (x, y) in &data {
            assert_eq!(x.numel(), model.spec().x_dim, "{name}");
            assert_eq!(y.numel(), model.spec().y_dim, "{name}");
        }
    }
}
