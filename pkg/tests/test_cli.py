import pytest

from app.main import main
from app.services.composer import save_tree
from app.services.generator import constant_generator, load_generator
from app.tasks.experiments import town_tree


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    """A two-generation town generator trained through the cli"""
    out = tmp_path_factory.mktemp("train")
    code = main(["--out", str(out), "--seed", "1", "train", "composed_town", "--generations", "2", "--population-size", "4"])
    assert code == 0
    return out


def test_train_writes_bundle(bundle):
    assert {p.name for p in bundle.iterdir()} >= {"generator.json", "metrics.csv", "config.json"}
    assert len((bundle / "metrics.csv").read_text().splitlines()) == 3


def test_generate_is_deterministic(bundle, tmp_path):
    """Same seed, same bytes"""
    args = ["--seed", "3", "generate", str(bundle / "generator.json"), "--size", "6", "4", "--output"]
    assert main(args + [str(tmp_path / "a.json")]) == 0
    assert main(args + [str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_compose(bundle, tmp_path):
    town = load_generator(bundle / "generator.json")
    save_tree(town_tree(town, constant_generator("wall")), tmp_path / "tree")
    out = tmp_path / "level.json"
    assert main(["compose", str(tmp_path / "tree" / "tree.json"), "--size", "25", "25", "--output", str(out)]) == 0
    assert main(["export", str(out), "--format", "ppm", "--output", str(tmp_path / "level.ppm")]) == 0
    assert (tmp_path / "level.ppm").read_text().startswith("P3\n25 25\n255\n")


def test_evaluate_prints_breakdown(bundle, tmp_path, capsys):
    level = tmp_path / "level.json"
    main(["generate", str(bundle / "generator.json"), "--size", "10", "10", "--output", str(level)])
    capsys.readouterr()
    assert main(["evaluate", str(level), "--config", "town"]) == 0
    out = capsys.readouterr().out
    assert "probability (weight 1): " in out
    assert "c_road=" in out
    assert out.strip().splitlines()[-1].startswith("total: ")


def test_evaluate_tileset_mismatch(bundle, tmp_path):
    level = tmp_path / "level.json"
    main(["generate", str(bundle / "generator.json"), "--size", "5", "5", "--output", str(level)])
    assert main(["evaluate", str(level), "--config", "composed_house"]) == 2


def test_errors_exit_2(tmp_path):
    assert main(["compose", str(tmp_path / "missing.json"), "--size", "5", "5"]) == 2
    assert main(["train", "no_such_preset"]) == 2


def test_window_experiment(tmp_path, capsys):
    args = [
        "--out", str(tmp_path), "experiment", "window_size",
        "--seeds", "0", "--window-sizes", "1", "--generations", "1", "--population-size", "2",
    ]
    assert main(args) == 0
    assert (tmp_path / "window_size" / "k1_seed0.csv").exists()
    assert (tmp_path / "window_size" / "summary.csv").read_text().startswith("window,runs,mean_final_max_fitness\n")
    assert "k1: mean final max fitness" in capsys.readouterr().out


def read_all(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_train_bytes_stable_across_runs_and_threads(tmp_path):
    outputs = []
    for run, threads in enumerate(["1", "1", "8"]):
        out = tmp_path / f"run{run}"
        args = [
            "--out", str(out), "--seed", "5", "--threads", threads,
            "train", "composed_town", "--generations", "2", "--population-size", "4",
        ]
        assert main(args) == 0
        outputs.append(read_all(out))
    assert set(outputs[0]) >= {"generator.json", "metrics.csv", "config.json"}
    assert outputs[0] == outputs[1] == outputs[2]


def test_compose_bytes_stable_across_runs_and_threads(bundle, tmp_path):
    town = load_generator(bundle / "generator.json")
    save_tree(town_tree(town, constant_generator("wall")), tmp_path / "tree")
    levels = []
    for run, threads in enumerate(["1", "1", "8"]):
        out = tmp_path / f"level{run}.json"
        args = [
            "--seed", "11", "--threads", threads,
            "compose", str(tmp_path / "tree" / "tree.json"), "--size", "25", "25", "--output", str(out),
        ]
        assert main(args) == 0
        levels.append(out.read_bytes())
    assert levels[0] == levels[1] == levels[2]
