import math

import numpy as np
import pytest

from lsbd.errors import IncompleteGridError, InvalidInputError, ParseError, UnsupportedSpecError
from lsbd.groups import GroupGrid, RepParams, direct_sum_apply
from lsbd.synth import (
    EmbeddingSet,
    OracleSpec,
    format_csv,
    generate,
    parse_csv,
    random_orthogonal,
    read_collection,
    read_csv,
    write_csv,
)


def test_perfect_quarter_turns():
    es = generate(OracleSpec("perfect", (1,)), GroupGrid.from_sizes([4]))
    want = [[1, 0], [0, 1], [-1, 0], [0, -1]]
    np.testing.assert_allclose(es.data, want, atol=1e-15)


def test_perfect_is_equivariant_exhaustively():
    grid = GroupGrid.from_sizes([6, 4])
    spec = OracleSpec("perfect", (2, -3), radius=(1.5, 0.7), phases=(0.2, -1.0))
    es = generate(spec, grid)
    params = RepParams(spec.omegas)
    elems = [tuple(e) for e in grid.elements().tolist()]
    for a in elems:
        for g in elems:
            moved = grid.index(grid.compose(g, a))
            want = direct_sum_apply(params, grid, g, es.data[grid.index(a)])
            np.testing.assert_allclose(es.data[moved], want, atol=1e-12)


def test_noisy_with_zero_sigma_equals_perfect():
    grid = GroupGrid.from_sizes([8, 8])
    perfect = generate(OracleSpec("perfect", (1, 2)), grid)
    noisy = generate(OracleSpec("noisy", (1, 2), noise_sigma=0.0, seed=5), grid)
    assert noisy.equals(perfect)


def test_generation_is_deterministic():
    grid = GroupGrid.from_sizes([8, 8])
    spec = OracleSpec("noisy", (1, 1), noise_sigma=0.3, seed=11)
    assert generate(spec, grid).equals(generate(spec, grid))
    other = generate(OracleSpec("noisy", (1, 1), noise_sigma=0.3, seed=12), grid)
    assert not generate(spec, grid).equals(other)


def test_noise_variance_matches_sigma():
    grid = GroupGrid.from_sizes([64, 64])
    sigma = 0.1
    clean = generate(OracleSpec("perfect", (1, 1)), grid)
    noisy = generate(OracleSpec("noisy", (1, 1), noise_sigma=sigma, seed=3), grid)
    msd = np.mean(np.sum((noisy.data - clean.data) ** 2, axis=1))
    assert msd == pytest.approx(sigma ** 2 * 4, rel=0.05)


def test_entangled_linear_applies_mix():
    grid = GroupGrid.from_sizes([8, 8])
    q = random_orthogonal(4, np.random.default_rng(0))
    es = generate(OracleSpec("entangled_linear", (1, 1), mix=q), grid)
    clean = generate(OracleSpec("perfect", (1, 1)), grid)
    np.testing.assert_allclose(es.data, clean.data @ q.T, atol=1e-14)
    np.testing.assert_allclose(q @ q.T, np.eye(4), atol=1e-12)


def test_sum_coupled_blocks():
    grid = GroupGrid.from_sizes([4, 4])
    es = generate(OracleSpec("sum_coupled", (1, 1)), grid)
    for i, (j1, j2) in enumerate(grid.elements().tolist()):
        t1, t2 = 2 * math.pi * j1 / 4, 2 * math.pi * j2 / 4
        np.testing.assert_allclose(es.data[i], [math.cos(t1 + t2), math.sin(t1 + t2), math.cos(t2), math.sin(t2)],
                                   atol=1e-12)


def test_oracle_validation():
    with pytest.raises(UnsupportedSpecError, match="K=2"):
        generate(OracleSpec("sum_coupled", (1,)), GroupGrid.from_sizes([8]))
    with pytest.raises(InvalidInputError):
        generate(OracleSpec("perfect", (1, 1)), GroupGrid.from_sizes([8]))
    with pytest.raises(InvalidInputError):
        OracleSpec("perfect", (1,), radius=(0.0,))
    with pytest.raises(InvalidInputError):
        OracleSpec("noisy", (1,), noise_sigma=-0.1)
    with pytest.raises(InvalidInputError):
        OracleSpec("entangled_linear", (1,), mix=np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        OracleSpec("bogus", (1,))


def test_extra_dimensions_are_zero_padded():
    es = generate(OracleSpec("perfect", (1,), dim=5), GroupGrid.from_sizes([8]))
    assert es.dim == 5
    assert np.all(es.data[:, 2:] == 0)


def test_random_oracle_shape():
    es = generate(OracleSpec("random", (1, 1), seed=2, dim=7), GroupGrid.from_sizes([4, 5]))
    assert es.data.shape == (20, 7)


def test_embedding_set_rejects_bad_data():
    grid = GroupGrid.from_sizes([4, 4])
    with pytest.raises(IncompleteGridError, match="row count 15 ≠ 16"):
        EmbeddingSet(grid, np.zeros((15, 4)))
    with pytest.raises(InvalidInputError):
        EmbeddingSet(grid, np.full((16, 4), np.nan))
    es = EmbeddingSet(grid, np.zeros((16, 4)))
    with pytest.raises(ValueError):
        es.data[0, 0] = 1.0


def test_csv_round_trip_is_exact(tmp_path):
    grid = GroupGrid.from_sizes([5, 3])
    es = generate(OracleSpec("noisy", (2, 1), noise_sigma=0.37, seed=9, dim=6), grid)
    path = tmp_path / "set.csv"
    write_csv(es, path)
    back = read_csv(path)
    assert back.equals(es)
    assert format_csv(back) == path.read_text()


def test_csv_round_trip_large_grid(tmp_path):
    es = generate(OracleSpec("noisy", (1, 3), noise_sigma=0.05, seed=1), GroupGrid.from_sizes([64, 64]))
    write_csv(es, tmp_path / "big.csv")
    assert read_csv(tmp_path / "big.csv").equals(es)


def test_csv_layout():
    es = EmbeddingSet(GroupGrid.from_sizes([2]), np.array([[0.1, 1.0], [-2.5, 3e-20]]))
    assert format_csv(es) == "# lsbd-grid: 2\n# dim: 2\n0,0.1,1.0\n1,-2.5,3e-20\n"


def _text(rows, header="# lsbd-grid: 2,2\n# dim: 1\n"):
    return header + "".join(r + "\n" for r in rows)


FULL = ["0,0,1.0", "0,1,2.0", "1,0,3.0", "1,1,4.0"]


def test_parse_valid_file():
    es = parse_csv(_text(FULL))
    np.testing.assert_array_equal(es.data[:, 0], [1, 2, 3, 4])


def test_parse_missing_rows_is_incomplete_grid():
    with pytest.raises(IncompleteGridError, match="row count 3 ≠ 4"):
        parse_csv(_text(FULL[:3]))


@pytest.mark.parametrize(
    "text, line",
    [
        ("lsbd-grid: 2\n# dim: 1\n", 1),
        ("# lsbd-grid: two\n# dim: 1\n", 1),
        ("# lsbd-grid: 2,2\n# dims: 1\n", 2),
        (_text(["0,0,1.0", "0,1"]), 4),
        (_text(["0,0,1.0", "0,x,2.0"]), 4),
        (_text(["0,0,abc"]), 3),
        (_text(["0,0,nan"]), 3),
        (_text(["0,0,1.0", "0,5,2.0"]), 4),
        (_text(["0,1,1.0", "0,0,2.0"]), 4),
        (_text(["0,0,1.0", "0,0,2.0"]), 4),
    ],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError, match=f"line {line}:") as info:
        parse_csv(text)
    assert not isinstance(info.value, IncompleteGridError)


def test_read_collection_sorted(tmp_path):
    grid = GroupGrid.from_sizes([4])
    for name, seed in (("b.csv", 1), ("a.csv", 2)):
        write_csv(generate(OracleSpec("random", (1,), seed=seed), grid), tmp_path / name)
    (tmp_path / "notes.txt").write_text("ignored")
    names = [n for n, _ in read_collection(tmp_path)]
    assert names == ["a.csv", "b.csv"]
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(InvalidInputError):
        read_collection(empty)
