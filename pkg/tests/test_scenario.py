import numpy as np
import pytest
from scipy.sparse import csgraph

from porebio.errors import InputError
from porebio.kinetics import DOM, MB
from porebio.network import PoreNetwork
from porebio.scenario import (ScenarioSpec, batch, export_state, generate, import_state,
                              summarize, write_summary)


def test_same_seed_is_bit_exact(channel_net):
    spec = ScenarioSpec(seed=11, dom_mode="heterogeneous")
    assert generate(channel_net, spec) == generate(channel_net, spec)
    assert not generate(channel_net, ScenarioSpec(seed=12)) == generate(channel_net, spec)


def test_homogeneous_concentration_is_uniform(channel_net):
    s = generate(channel_net, ScenarioSpec(seed=3))
    conc = s.masses[:, DOM] / channel_net.volumes
    assert conc.max() - conc.min() <= 1e-15 * conc.max()


@pytest.mark.parametrize("mode", ["homogeneous", "heterogeneous"])
@pytest.mark.parametrize("seed", range(6))
def test_invariants(channel_net, mode, seed):
    spec = ScenarioSpec(seed=seed, dom_mode=mode)
    s = generate(channel_net, spec)
    tot = s.masses.sum(axis=0)
    assert s.masses.min() >= 0.0
    assert 5e-4 <= tot[MB] / tot[DOM] <= 1.5e-3
    np.testing.assert_array_equal(s.masses[:, 2:], 0.0)
    # the first draw is the DOM density (ug per voxel volume)
    density = np.random.Generator(np.random.PCG64(seed)).uniform(1e-7, 9e-4)
    res = channel_net.meta["resolution_um"]
    expected = density * channel_net.volumes.sum() / res ** 3
    assert tot[DOM] == pytest.approx(expected, rel=1e-12)


def test_patches_stay_within_radius(channel_net):
    spec = ScenarioSpec(seed=4, patch_count_range=(1, 1), patch_radius=2)
    s = generate(channel_net, spec)
    nodes = np.flatnonzero(s.masses[:, MB] > 0)
    rng = np.random.Generator(np.random.PCG64(4))
    rng.uniform(), rng.uniform(), rng.integers(1, 2)
    center = int(rng.integers(channel_net.n_nodes))
    hops = csgraph.shortest_path(channel_net.adjacency(), unweighted=True, indices=center)
    assert center in nodes
    assert np.all(hops[nodes] <= 2)
    assert set(np.flatnonzero(hops <= 2)) == set(nodes)


def test_patch_radius_zero_single_nodes(channel_net):
    s = generate(channel_net, ScenarioSpec(seed=0, patch_count_range=(4, 4), patch_radius=0))
    assert 1 <= np.count_nonzero(s.masses[:, MB]) <= 4


def test_batch_and_summary(channel_net, tmp_path):
    template = ScenarioSpec(dom_mode="heterogeneous")
    states = batch(channel_net, template, 13, base_seed=100)
    assert len(states) == 13
    assert batch(channel_net, template, 1, base_seed=5)[0] == generate(
        channel_net, ScenarioSpec(dom_mode="heterogeneous", seed=5))
    rows = summarize(states, range(100, 113), ["heterogeneous"] * 13)
    assert len({r["seed"] for r in rows}) == 13
    assert all(5e-4 <= r["mb_fraction"] <= 1.5e-3 for r in rows)
    path = write_summary(rows, tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 14 and lines[0].startswith("scenario,seed,mode")
    with pytest.raises(InputError):
        batch(channel_net, template, 0, 1)


def test_state_json_round_trip(channel_net, tmp_path):
    s = generate(channel_net, ScenarioSpec(seed=8))
    back = import_state(export_state(s, tmp_path / "st.json"))
    assert back == s


def test_state_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"time": 0, "nodes": {"0": [1, 2, 3, 4, 5], "2": [1, 2, 3, 4, 5]}}')
    with pytest.raises(InputError):
        import_state(p)
    p.write_text('{"nodes": {"0": [1, 2]}}')
    with pytest.raises(InputError):
        import_state(p)


def test_spec_validation_and_dict_round_trip():
    with pytest.raises(InputError):
        ScenarioSpec(dom_mode="patchy")
    with pytest.raises(InputError):
        ScenarioSpec(mb_fraction_range=(0.2, 0.1))
    with pytest.raises(InputError):
        ScenarioSpec(patch_count_range=(0, 3))
    with pytest.raises(InputError):
        ScenarioSpec.from_dict({"seeds": 1})
    spec = ScenarioSpec(seed=9, dom_mode="heterogeneous", patch_count_range=(2, 4))
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec


def test_empty_network_rejected():
    empty = PoreNetwork(centers=np.zeros((0, 3)), radii=[], volumes=[], edge_i=[], edge_j=[],
                        areas=[], dists=[], q=[])
    with pytest.raises(InputError):
        generate(empty, ScenarioSpec())
