import numpy as np
import pytest

from amnet.datasets import LabeledDataset, TaskSpec, make_disjoint_tasks
from amnet.ewc import FisherAnchor, ewc_penalty
from amnet.layers import LayerGradients, Network, network_backward, network_forward, softmax_ce
from amnet.linalg import SeededRng
from amnet.trainer import (MEMORY, NORMAL, OptimizerConfig, TrainingMethod, apply_sign_rule, evaluate,
                           sequential_run, sgd_step, train_task, update_groups)


def blob_data(n_per_class=40, d=12, seed=0, split="train"):
    """Gaussian blobs, one per class 0-9, easily separable."""
    r = np.random.default_rng(seed)
    centers = np.random.default_rng(99).uniform(0, 1, size=(10, d))
    labels = np.repeat(np.arange(10), n_per_class)
    images = np.clip(centers[labels] + 0.05 * r.normal(size=(len(labels), d)), 0, 1)
    order = r.permutation(len(labels))
    return LabeledDataset(images[order], labels[order], split)


@pytest.fixture
def tasks():
    return make_disjoint_tasks(blob_data(), blob_data(20, seed=1, split="test"))


def make_net(tasks, k=2, seed=0, loss="softmax", scheme="shared"):
    return Network.build([12, 16, 16, tasks[0].n_outputs], len(tasks), k, SeededRng(seed),
                         loss=loss, scheme=scheme)


def cfg(**kw):
    base = dict(learning_rate=0.1, batch_size=20, epochs_per_task=3, eps=0.05, lam=10.0, fisher_samples=50)
    base.update(kw)
    return OptimizerConfig(**base)


def snapshot(net):
    out = []
    for layer in net.layers:
        out.append(layer.w_normal.tobytes() + layer.bias.tobytes())
        out.append([u.tobytes() for u in layer.mem_units] + [w.tobytes() for w in layer.mem_weights])
    return out


def grads_for(net, tasks, t=0):
    x = tasks[t].train_images[:10]
    logits, cache = network_forward(net, x)
    _, g = softmax_ce(logits, tasks[t].train_targets[:10])
    return network_backward(net, cache, g)


def test_sign_rule_only_touches_memory_units(tasks):
    net = make_net(tasks)
    net.active_task = 0
    raw = grads_for(net, tasks)
    ruled = apply_sign_rule(raw, 0.3)
    for r, s in zip(raw, ruled):
        assert set(np.unique(s.g_mem_units)) <= {-0.3, 0.0, 0.3}
        assert s.g_w_normal.tobytes() == r.g_w_normal.tobytes()
        assert s.g_bias.tobytes() == r.g_bias.tobytes()
        assert s.g_mem_weights.tobytes() == r.g_mem_weights.tobytes()


def test_sign_rule_passes_through_without_memory(tasks):
    net = make_net(tasks)
    raw = grads_for(net, tasks)
    ruled = apply_sign_rule(raw, 0.3)
    for r, s in zip(raw, ruled):
        assert s is r


def test_null_step_leaves_network_unchanged(tasks):
    net = make_net(tasks)
    net.active_task = 1
    before = snapshot(net)
    zeros = [LayerGradients(np.zeros_like(l.w_normal), np.zeros_like(l.bias), np.zeros((1, l.in_dim)),
                            np.zeros_like(l.mem_units[1]), np.zeros_like(l.mem_weights[1])) for l in net.layers]
    sgd_step(net, zeros, 0.1, TrainingMethod.AD_EWC, frozenset({NORMAL, MEMORY}))
    assert snapshot(net) == before


def test_single_parameter_step():
    from amnet.layers import MemoryLayer
    layer = MemoryLayer(np.array([[1.0]]), np.array([[0.0]]), [np.zeros((1, 0))], [np.zeros((1, 0))])
    net = Network([layer])
    g = LayerGradients(np.array([[2.0]]), np.array([[0.0]]), np.zeros((1, 1)))
    sgd_step(net, [g], 0.1, TrainingMethod.PGD, frozenset({NORMAL}))
    assert net.layers[0].w_normal[0, 0] == pytest.approx(0.8, abs=1e-15)


def test_inconsistent_groups_rejected(tasks):
    net = make_net(tasks)
    g = grads_for(net, tasks)
    with pytest.raises(ValueError):
        sgd_step(net, g, 0.1, TrainingMethod.PGD, frozenset({NORMAL, MEMORY}))
    net.active_task = 0
    with pytest.raises(ValueError):
        sgd_step(net, grads_for(net, tasks), 0.1, TrainingMethod.EWC_ONLY, frozenset({NORMAL}))


def test_update_groups_policy():
    assert update_groups(TrainingMethod.PGD, 2) == {NORMAL}
    assert update_groups(TrainingMethod.EWC_ONLY, 1) == {NORMAL}
    assert update_groups(TrainingMethod.AD, 0) == {NORMAL, MEMORY}
    assert update_groups(TrainingMethod.AD, 1) == {MEMORY}
    assert update_groups(TrainingMethod.AD_EWC, 2) == {NORMAL, MEMORY}


def test_ad_freezes_normal_weights_on_later_tasks(tasks):
    net = make_net(tasks)
    train_task(net, tasks[0], "ad", cfg(), (), SeededRng(1), 0, tasks)
    normal = [p.tobytes() for p in net.normal_params()]
    task0_mem = [(l.mem_units[0].tobytes(), l.mem_weights[0].tobytes()) for l in net.layers]
    train_task(net, tasks[1], "ad", cfg(), (), SeededRng(2), 1, tasks)
    assert [p.tobytes() for p in net.normal_params()] == normal
    assert [(l.mem_units[0].tobytes(), l.mem_weights[0].tobytes()) for l in net.layers] == task0_mem
    assert any(l.mem_units[1].any() for l in net.layers)


@pytest.mark.parametrize("method", ["pgd", "ewc", "ad", "ad_ewc"])
def test_inactive_memory_never_changes(tasks, method):
    net = make_net(tasks)
    before = [(l.mem_units[2].tobytes(), l.mem_weights[2].tobytes()) for l in net.layers]
    sequential_run(net, tasks[:2], method, cfg(epochs_per_task=2))
    assert [(l.mem_units[2].tobytes(), l.mem_weights[2].tobytes()) for l in net.layers] == before


def test_memory_off_methods_never_touch_memory(tasks):
    for method in ("pgd", "ewc"):
        net = make_net(tasks)
        before = snapshot(net)
        sequential_run(net, tasks, method, cfg(epochs_per_task=1))
        after = snapshot(net)
        assert [a for a in after[1::2]] == [b for b in before[1::2]]


def _unit_changes(tasks, method, memory_update, task_number=1):
    net = make_net(tasks)
    c = cfg(memory_update=memory_update, epochs_per_task=1)
    train_task(net, tasks[0], method, c, (), SeededRng(1), 0, tasks)
    deltas = []
    prev = {}

    def watch(n):
        t = n.active_task
        cur = [l.mem_units[t].copy() for l in n.layers]
        if "u" in prev:
            deltas.extend((c - p).ravel() for c, p in zip(cur, prev["u"]))
            deltas.extend(((c, p)) for c, p in [])
        prev["u"] = cur

    net.active_task = 1
    prev["u"] = [l.mem_units[1].copy() for l in net.layers]
    train_task(net, tasks[1], method, c, (), SeededRng(2), task_number, tasks, on_step=watch)
    return np.concatenate(deltas), c.learning_rate * c.eps


@pytest.mark.parametrize("method", ["ad", "ad_ewc"])
def test_memory_units_move_by_lr_eps(tasks, method):
    d, step = _unit_changes(tasks, method, "sign")
    mag = np.abs(d)
    # exact up to the rounding of one subtraction
    ok = (mag == 0) | (np.abs(mag - step) <= 4 * np.spacing(1.0 + step))
    assert ok.all()
    assert (mag > 0).any()


def test_gradient_memory_update_breaks_fixed_step(tasks):
    d, step = _unit_changes(tasks, "ad", "gradient")
    mag = np.abs(d)
    ok = (mag == 0) | (np.abs(mag - step) <= 4 * np.spacing(1.0 + step))
    assert not ok.all()


def test_train_task_zero_epochs(tasks):
    net = make_net(tasks)
    before = snapshot(net)
    assert train_task(net, tasks[0], "ad_ewc", cfg(epochs_per_task=0), (), SeededRng(1), 0, tasks) == []
    assert snapshot(net) == before


def test_train_task_records_and_accuracy_range(tasks):
    net = make_net(tasks)
    recs = train_task(net, tasks[0], "pgd", cfg(), (), SeededRng(1), 0, tasks)
    assert [(r.trained_task, r.epoch) for r in recs] == [(1, 1), (1, 2), (1, 3)]
    for r in recs:
        assert len(r.accuracies) == 3
        assert all(0.0 <= a <= 1.0 for a in r.accuracies)
    assert recs[-1].accuracies[0] > 0.9


def test_ad_task1_accuracy_constant_while_training_task2(tasks):
    net = make_net(tasks)
    first = train_task(net, tasks[0], "ad", cfg(), (), SeededRng(1), 0, tasks)
    later = train_task(net, tasks[1], "ad", cfg(), (), SeededRng(2), 1, tasks)
    assert {r.accuracies[0] for r in later} == {first[-1].accuracies[0]}


def test_same_seed_same_metrics(tasks):
    runs = []
    for _ in range(2):
        net = make_net(tasks)
        runs.append(sequential_run(net, tasks, "ad_ewc", cfg(epochs_per_task=2), SeededRng(3))[0])
    assert [(r.trained_task, r.epoch, r.accuracies) for r in runs[0]] == \
           [(r.trained_task, r.epoch, r.accuracies) for r in runs[1]]


def test_sequential_single_task_equals_train_task(tasks):
    a = make_net(tasks)
    ma, anchors = sequential_run(a, tasks[:1], "ewc", cfg(), SeededRng(4))
    b = make_net(tasks)
    mb = train_task(b, tasks[0], "ewc", cfg(), (), SeededRng(4), 0, tasks[:1])
    assert anchors == []
    assert [r.accuracies for r in ma] == [r.accuracies for r in mb]
    assert snapshot(a) == snapshot(b)


def test_ewc_creates_one_anchor_per_finished_task(tasks):
    net = make_net(tasks)
    _, anchors = sequential_run(net, tasks, "ewc", cfg(epochs_per_task=1))
    assert [a.task_id for a in anchors] == [0, 1]
    _, none = sequential_run(make_net(tasks), tasks, "pgd", cfg(epochs_per_task=1))
    assert none == []


def test_sequential_rejects_overlapping_tasks(tasks):
    bad = [tasks[0], tasks[0]]
    with pytest.raises(ValueError):
        sequential_run(make_net(tasks), bad, "pgd", cfg())


class CountingTask(TaskSpec):
    def __getattribute__(self, name):
        if name in ("train_images", "train_labels"):
            counts = object.__getattribute__(self, "counts")
            counts[name] = counts.get(name, 0) + 1
        return object.__getattribute__(self, name)


def test_no_replay(tasks):
    counted = []
    for t in tasks:
        c = CountingTask(t.task_index, t.class_list, t.label_map, t.outputs, t.n_outputs,
                         t.train_images, t.train_labels, t.test_images, t.test_labels)
        object.__setattr__(c, "counts", {})
        counted.append(c)
    net = make_net(tasks)
    for c in counted:
        c.counts.clear()
    train_task(net, counted[1], "ad_ewc", cfg(), (), SeededRng(1), 1, counted)
    assert counted[1].counts
    assert not counted[0].counts and not counted[2].counts


def test_ewc_step_pulls_towards_anchor(tasks):
    net = make_net(tasks)
    anchor_params = tuple(p.copy() for p in net.normal_params())
    fisher = tuple(np.full_like(p, 0.5) for p in net.normal_params())
    anchor = FisherAnchor(0, anchor_params, fisher)
    r = np.random.default_rng(0)
    for p in net.normal_params():
        p += r.normal(scale=0.1, size=p.shape)
    before = ewc_penalty(net.normal_params(), [anchor], 5.0)[0]
    zeros = [LayerGradients(np.zeros_like(l.w_normal), np.zeros_like(l.bias), np.zeros((1, l.in_dim)))
             for l in net.layers]
    sgd_step(net, zeros, 0.1, TrainingMethod.EWC_ONLY, frozenset({NORMAL}), [anchor], 5.0)
    assert ewc_penalty(net.normal_params(), [anchor], 5.0)[0] < before


def test_evaluate_chance_level():
    train = blob_data(100)
    test = blob_data(300, seed=5, split="test")
    t = make_disjoint_tasks(train, test)[0]
    net = Network.build([12, 3], 3, 1, SeededRng(11))
    for layer in net.layers:
        layer.w_normal[:] = 0.0
        layer.bias[:] = np.array([[0.0], [0.0], [0.0]])
    # ties resolve to output 0, so fix a random untrained net instead
    net = Network.build([12, 8, 3], 3, 1, SeededRng(12))
    accs = [evaluate(net, t)]
    n = len(t.test_labels)
    assert 0.0 <= accs[0] <= 1.0
    # a random net is not better than chance by more than a wide margin on balanced classes
    scores = []
    for s in range(20):
        scores.append(evaluate(Network.build([12, 8, 3], 3, 1, SeededRng(100 + s)), t))
    sigma = np.sqrt((1 / 3) * (2 / 3) / n)
    assert abs(np.mean(scores) - 1 / 3) <= 3 * sigma * 3


def test_evaluate_overfit_one_batch(tasks):
    t = tasks[0]
    batch = TaskSpec(0, t.class_list, t.label_map, t.outputs, t.n_outputs, t.train_images[:20],
                     t.train_labels[:20], t.train_images[:20], t.train_labels[:20])
    net = make_net(tasks)
    train_task(net, batch, "pgd", cfg(epochs_per_task=200, batch_size=20, learning_rate=0.2), (),
               SeededRng(0), 0, [batch])
    assert evaluate(net, batch, use_memory=False) == 1.0


def test_shared_and_individual_agree_when_argmax_in_block(tasks):
    ind = make_disjoint_tasks(blob_data(), blob_data(20, seed=1, split="test"), scheme="individual")
    net9 = Network.build([12, 16, 9], 3, 1, SeededRng(3), scheme="individual")
    # force outputs of block 1 to dominate so the global argmax lands in task 2's block
    net9.layers[-1].bias[3:6] += 100.0
    acc_ind = evaluate(net9, ind[1])
    net9.scheme = "shared"
    acc_shared = evaluate(net9, ind[1])
    assert acc_ind == acc_shared


def test_evaluate_empty_test_split(tasks):
    t = tasks[0]
    empty = TaskSpec(0, t.class_list, t.label_map, t.outputs, t.n_outputs, t.train_images, t.train_labels,
                     t.test_images[:0], t.test_labels[:0])
    with pytest.raises(ValueError):
        evaluate(make_net(tasks), empty)


def test_sigmoid_individual_run(tasks):
    ind = make_disjoint_tasks(blob_data(), blob_data(20, seed=1, split="test"), scheme="individual")
    net = make_net(ind, loss="sigmoid", scheme="individual")
    metrics, anchors = sequential_run(net, ind, "ad_ewc", cfg(epochs_per_task=2))
    assert len(metrics) == 6 and len(anchors) == 2


def test_divergence_raises(tasks):
    from amnet.trainer import DivergenceError
    net = make_net(tasks)
    with pytest.raises(DivergenceError), np.errstate(all="ignore"):
        train_task(net, tasks[0], "pgd", cfg(learning_rate=1e300), (), SeededRng(1), 0, tasks)


def test_penalty_stiffness_sums_anchors():
    from amnet.trainer import penalty_stiffness
    f1 = (np.array([[0.1, 0.3]]), np.array([[0.2]]))
    f2 = (np.array([[0.25, 0.05]]), np.array([[0.0]]))
    zero = (np.zeros((1, 2)), np.zeros((1, 1)))
    anchors = [FisherAnchor(0, zero, f1), FisherAnchor(1, zero, f2)]
    assert penalty_stiffness(anchors, 10.0) == pytest.approx(10.0 * 0.35)
    assert penalty_stiffness([], 10.0) == 0.0


def test_stiff_penalty_warns(tasks, caplog):
    net = make_net(tasks)
    with caplog.at_level("WARNING", logger="amnet.trainer"):
        sequential_run(net, tasks[:2], "ewc", cfg(epochs_per_task=1, lam=1e5))
    assert "oscillate" in caplog.text
