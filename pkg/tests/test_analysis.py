import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import scenecluster.analysis as analysis
from helpers import car, random_graph, scene
from scenecluster.analysis import (
    EmbeddingRow,
    embed_dataset,
    read_scatter_csv,
    sample_sweep_scenes,
    scatter_export,
    scene_statistics,
    velocity_sweep,
    with_speed_offset,
)
from scenecluster.encoder import init_params, zero_params
from scenecluster.graph_builder import build_graph
from scenecluster.scene_model import Archetype, generate_synthetic_scene


def some_graphs(n=6, seed=0):
    rng = np.random.default_rng(seed)
    return [random_graph(rng, int(rng.integers(2, 6)), scene_id=f"g{i}") for i in range(n)]


def test_zero_checkpoint_gives_origin():
    rows = embed_dataset(zero_params(), some_graphs())
    assert [(r.sx, r.sy) for r in rows] == [(0.0, 0.0)] * 6


def test_duplicated_graph_duplicated_rows():
    g = some_graphs(1)[0]
    a, b = embed_dataset(init_params(1), [g, g])
    assert a == b


@given(st.integers(0, 1000))
def test_permuted_input_permutes_rows(seed):
    graphs = some_graphs(5, seed)
    p = init_params(seed)
    rows = embed_dataset(p, graphs)
    perm = np.random.default_rng(seed).permutation(5)
    assert embed_dataset(p, [graphs[i] for i in perm]) == [rows[i] for i in perm]
    assert len(rows) == len(graphs)


def test_two_car_statistics(single_lane):
    s = scene(car(1, 5, 0, vx=3), car(2, 20, 0, vx=4, vy=3))
    st_ = scene_statistics(s, build_graph(s, single_lane))
    assert (st_.num_vehicles, st_.num_edges, st_.num_longitudinal) == (2, 2, 2)
    assert (st_.num_lateral, st_.num_intersecting) == (0, 0)
    assert st_.mean_speed == pytest.approx(4.0)


def test_stationary_scene_statistics(single_lane):
    s = scene(car(1, 5, 0), car(2, 20, 0))
    assert scene_statistics(s, build_graph(s, single_lane)).mean_speed == 0


def test_edgeless_statistics(single_lane):
    s = scene(car(1, 5, 0, vx=1))
    st_ = scene_statistics(s, None)
    assert (st_.num_vehicles, st_.num_edges) == (1, 0)


@given(st.sampled_from(list(Archetype)), st.integers(0, 5000))
def test_statistics_counts_consistent(synth_map, arch, seed):
    s = generate_synthetic_scene(arch, synth_map, seed)
    st_ = scene_statistics(s, build_graph(s, synth_map))
    assert min(st_.num_edges, st_.num_longitudinal, st_.num_lateral, st_.num_intersecting) >= 0
    assert st_.num_longitudinal + st_.num_lateral + st_.num_intersecting == st_.num_edges


# ---------------------------------------------------------------- speed offset & sweep

def test_speed_offset_keeps_direction():
    s = scene(car(1, 0, 0, vx=3, vy=4), car(2, 10, 0, yaw=math.pi / 2))
    out = with_speed_offset(s, 1.0)
    a, b = out.entities
    assert (a.vx, a.vy) == pytest.approx((3.6, 4.8))
    assert (b.vx, b.vy) == pytest.approx((0.0, 1.0), abs=1e-12)
    assert with_speed_offset(s, 0.0) is s


@pytest.fixture(scope="module")
def sweep_scenes(synth_map):
    scenes = [generate_synthetic_scene(a, synth_map, i) for i in range(3) for a in Archetype]
    return [s for s in scenes if build_graph(s, synth_map) is not None]


def test_zero_delta_gives_identical_steps(synth_map, sweep_scenes):
    rows, missing = velocity_sweep(init_params(2), sweep_scenes[:3], synth_map, delta_v=0.0)
    assert missing == []
    assert len(rows) == 33
    for k in range(3):
        block = rows[11 * k:11 * (k + 1)]
        assert len({(r.sx, r.sy) for r in block}) == 1
        assert [r.step for r in block] == list(range(11))


def test_sweep_row_count_and_first_step(synth_map, sweep_scenes):
    p = init_params(4)
    rows, missing = velocity_sweep(p, sweep_scenes, synth_map)
    assert len(rows) + len(missing) == 11 * len(sweep_scenes)
    graphs = [build_graph(s, synth_map) for s in sweep_scenes]
    first = [EmbeddingRow(r.scene_id, r.sx, r.sy) for r in rows if r.step == 0]
    assert first == embed_dataset(p, graphs)


def test_sweep_keeps_topology(synth_map, sweep_scenes):
    for s in sweep_scenes:
        base = build_graph(s, synth_map)
        for k in (1, 5, 10):
            g = build_graph(with_speed_offset(s, 0.5 * k), synth_map)
            assert g.relations == base.relations
            assert np.array_equal(g.edge_src, base.edge_src) and np.array_equal(g.edge_dst, base.edge_dst)


def test_sweep_records_edgeless_steps(single_lane, monkeypatch):
    real = analysis.build_graph

    def fast_scenes_are_edgeless(sc, lane_map, gates):
        return None if sc.entities[0].speed > 1.2 else real(sc, lane_map, gates)

    monkeypatch.setattr(analysis, "build_graph", fast_scenes_are_edgeless)
    s = scene(car(1, 5, 0, vx=1), car(2, 30, 0, vx=1))
    rows, missing = velocity_sweep(init_params(0), [s], single_lane, delta_v=0.25, steps=3)
    assert [r.step for r in rows] == [0]
    assert missing == [("s", 1), ("s", 2), ("s", 3)]


def test_sample_sweep_scenes_spreads_clusters(sweep_scenes):
    labels = {s.scene_id: i % 3 for i, s in enumerate(sweep_scenes)}
    picked = sample_sweep_scenes(sweep_scenes, 3, 0, labels)
    assert sorted(labels[s.scene_id] for s in picked) == [0, 1, 2]
    assert picked == sample_sweep_scenes(sweep_scenes, 3, 0, labels)
    assert len(sample_sweep_scenes(sweep_scenes, 4, 1)) == 4
    assert sample_sweep_scenes(sweep_scenes, 10_000, 1) == sweep_scenes


# ---------------------------------------------------------------- scatter

def test_single_marker(tmp_path):
    csv_path, svg_path = scatter_export([(0.0, 0.0, 1.0)], tmp_path / "plot")
    assert svg_path.read_text().count('class="pt"') == 1
    assert len(csv_path.read_text().splitlines()) == 2


def test_rows_outside_square_rejected(tmp_path):
    with pytest.raises(ValueError):
        scatter_export([(1.5, 0.0, 1.0)], tmp_path / "plot")
    with pytest.raises(ValueError):
        scatter_export([], tmp_path / "plot")


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1e6, 1e6)), min_size=1, max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("sc") / "plot.svg"
    csv_path, _ = scatter_export(rows, path)
    assert read_scatter_csv(csv_path) == [tuple(map(float, r)) for r in rows]
