import csv
import math
import pytest
import thincloud.bench.ablation as ablation
from thincloud.bench.ablation import (ABLATION_HEADER, AblationRunner, parse_arms)
from thincloud.bench.benchmark import (BENCH_HEADER, BenchConfig, BenchMark, run_bench)
from thincloud.common.csvfile import (format_value, read_header, write_rows)
from thincloud.common.exception import (ConfigError, DataError, UsageError)
from thincloud.common.plot import plot_bench_scaling
from thincloud.gan.trainer import TrainConfig
from thincloud.model.network import Generator


def read_csv(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.reader(f))


# ------------------------------
# scaling benchmark
# ------------------------------
def test_bench_config_validation():
    BenchConfig().validate()
    with pytest.raises(UsageError):
        BenchConfig(sizes=(64, 32)).validate()
    with pytest.raises(UsageError):
        BenchConfig(sizes=(32, 32)).validate()
    with pytest.raises(ConfigError):
        BenchConfig(reps=4).validate()
    with pytest.raises(ConfigError):
        BenchConfig(kernels=('quadratic',)).validate()
    with pytest.raises(ConfigError):
        BenchConfig(sizes=(0, 8)).validate()


def test_peak_transient_elements(tmp_path):
    bench = BenchMark(BenchConfig(sizes=(16, 64), dim=4, reps=5))
    records = bench.run(show_info=False)
    assert [(r.kernel, r.N) for r in records]==[('softmax', 16), ('softmax', 64), ('linear', 16), ('linear', 64)]
    for r in records:
        assert r.wall_time_ns > 0 and r.reps==5 and r.D==4
        if r.kernel=='softmax':
            assert r.peak_transient_elements >= r.N*r.N
        else:
            assert r.peak_transient_elements <= 4*(r.N*r.D + r.D*r.D)
    assert set(bench.ratios('linear'))=={(16, 64)}
    assert len(bench.summary_list())==4
    assert 'Peak elements' in bench.summary().get_string()

    path = str(tmp_path / 'bench.csv')
    bench.to_csv(path)
    bench.to_csv(path, append=True)
    lines = read_csv(path)
    assert lines[0]==list(BENCH_HEADER)
    assert len(lines)==9
    assert lines[1][:3]==['softmax', '16', '4']

    plot = tmp_path / 'bench.png'
    plot_bench_scaling(records, str(plot))
    assert plot.stat().st_size > 0


def test_run_bench_writes_csv(tmp_path):
    path = str(tmp_path / 'bench.csv')
    records = run_bench(sizes=(8, 16), dim=2, reps=5, out=path)
    assert len(records)==4
    assert [int(r[1]) for r in read_csv(path)[1:]]==[8, 16, 8, 16]


def test_append_needs_same_header(tmp_path):
    path = str(tmp_path / 'x.csv')
    write_rows(path, ('a', 'b'), [[1, 2]])
    with pytest.raises(DataError):
        write_rows(path, ('a', 'c'), [[3, 4]], append=True)
    with pytest.raises(DataError):
        write_rows(path, ('a', 'b'), [[3]], append=True)
    write_rows(path, ('a', 'b'), [[3, 4]], append=True)
    assert read_csv(path)==[['a', 'b'], ['1', '2'], ['3', '4']]
    assert read_header(path)==['a', 'b']


def test_format_value():
    assert format_value(math.inf)=='inf'
    assert format_value(float('nan'))=='nan'
    assert format_value(0.1)=='0.1'
    assert format_value(7)=='7'
    assert float(format_value(1/3))==pytest.approx(1/3, rel=1e-9)


@pytest.mark.slow
def test_complexity_separation():
    bench = BenchMark(BenchConfig(sizes=(1024, 4096), dim=32, reps=7))
    bench.run(show_info=False)
    assert 8.0 <= bench.ratios('softmax')[(1024, 4096)] <= 64.0
    assert 2.0 <= bench.ratios('linear')[(1024, 4096)] <= 8.0


# ------------------------------
# ablation
# ------------------------------
def test_parse_arms(tiny_gen_cfg):
    arms = parse_arms('conv, 1,2', tiny_gen_cfg)
    assert [a for a, _ in arms]==['conv', '1', '2']
    assert arms[0][1].encoder=='conv'
    assert [c.heads for _, c in arms[1:]]==[1, 2]
    assert all(c.base_channels==tiny_gen_cfg.base_channels for _, c in arms)
    for text in ('', 'conv,x', '0', '-1'):
        with pytest.raises(UsageError):
            parse_arms(text, tiny_gen_cfg)


def test_ablation_runner(tmp_path, tiny_pairs, tiny_gen_cfg):
    train, test = tiny_pairs
    runner = AblationRunner(parse_arms('conv,1,2', tiny_gen_cfg), train, test,
                            TrainConfig(steps=1, batch_size=2), num_threads=2)
    results = runner.run(show_info=False)
    assert [(r.arm, r.encoder, r.heads) for r in results]==[('conv', 'conv', 0), ('1', 'attention', 1),
                                                           ('2', 'attention', 2)]
    assert all(r.status and math.isfinite(r.psnr) for r in results)
    assert len({r.baseline_psnr for r in results})==1

    path = str(tmp_path / 'ablation.csv')
    runner.to_csv(path)
    lines = read_csv(path)
    assert lines[0]==list(ABLATION_HEADER)
    assert [l[0] for l in lines[1:]]==['conv', '1', '2']
    assert 'Baseline PSNR' in runner.summary().get_string()


def test_failing_arm_does_not_stall_others(monkeypatch, tiny_pairs, tiny_gen_cfg):
    def build(cfg, seed=None):
        if cfg.encoder=='attention' and cfg.heads==1: raise ValueError('broken arm')
        return Generator(cfg, seed=seed)

    monkeypatch.setattr(ablation, 'Generator', build)
    train, test = tiny_pairs
    runner = AblationRunner(parse_arms('conv,1,2', tiny_gen_cfg), train, test,
                            TrainConfig(steps=1, batch_size=2), num_threads=1)
    results = runner.run(show_info=False)
    assert [r.status for r in results]==[True, False, True]
    assert math.isnan(results[1].psnr) and math.isfinite(results[2].psnr)
