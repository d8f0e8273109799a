"""
Templated and explicit runs of random multi-block programs end in the same
state. Every task is a Tag, so a payload digests the params and the exact
input payloads that produced it: equal payloads mean every task read the
same versions in both modes.
"""

import random

from modules.harness.local_cluster import LocalCluster

PARTITIONS = 3


def random_program(rng):
    """Fixed block shapes plus a script of invocations and rebalances"""
    workers = rng.randint(1, 4)
    singletons = rng.randint(1, 3)
    partitioned = rng.randint(1, 2)
    objects = [('s', i, None) for i in range(singletons)]
    objects += [('p', i, p) for i in range(partitioned) for p in range(PARTITIONS)]

    blocks = {}
    for name in ('a', 'b', 'c')[:rng.randint(1, 3)]:
        shape = []
        for index in range(rng.randint(1, 8)):
            reads = rng.sample(objects, rng.randint(0, min(3, len(objects))))
            writes = rng.sample(objects, rng.randint(1, min(2, len(objects))))
            before = rng.sample(range(index), rng.randint(0, min(2, index)))
            shape.append((reads, writes, rng.choice([None, *range(PARTITIONS)]), before))
        blocks[name] = shape

    script = []
    for _ in range(rng.randint(4, 10)):
        if workers > 1 and rng.random() < 0.15:
            script.append(('rebalance', sorted(rng.sample(range(workers), rng.randint(1, workers)))))
        else:
            script.append(('block', rng.choice(sorted(blocks)), [rng.randbytes(rng.randint(0, 4)) for _ in range(8)]))
    return workers, objects, blocks, script


def run_program(program, templates):
    workers, objects, blocks, script = program
    cluster = LocalCluster(workers=workers)
    client = cluster.client(templates=templates)
    table = {}
    for kind, i, p in objects:
        if p is None:
            table[(kind, i, p)] = client.objects.define(f"{kind}{i}")
        elif p == 0:
            ids = client.objects.define(f"{kind}{i}", PARTITIONS)
            for q, object_id in enumerate(ids):
                table[(kind, i, q)] = object_id
    client.define_objects()

    handles = []
    for entry in script:
        if entry[0] == 'rebalance':
            client.rebalance(entry[1])
            continue
        _, name, params = entry
        with client.block(name) as blk:
            ids = []
            for index, (reads, writes, partition, before) in enumerate(blocks[name]):
                ids.append(blk.spawn('Tag', [table[o] for o in reads], [table[o] for o in writes],
                                     [ids[b] for b in before], params[index], partition))
        handles.append(blk.handle)
    client.flush()

    values = client.read_objects(sorted(table.values()))
    versions = {o: cluster.core.directory.version(o) for o in table.values()}
    return values, versions, [h.mode for h in handles]


def test_random_programs_agree_with_and_without_templates():
    rng = random.Random(1107)
    templated_modes = set()
    for _ in range(60):
        program = random_program(rng)
        values, versions, modes = run_program(program, templates=True)
        expected_values, expected_versions, explicit_modes = run_program(program, templates=False)
        assert values == expected_values
        assert versions == expected_versions
        assert set(explicit_modes) == {'explicit'}
        templated_modes.update(modes)
    assert 'record' in templated_modes
    assert templated_modes & {'fast', 'hit'}


def test_changing_params_reach_the_cached_template():
    def final_value(templates):
        cluster = LocalCluster(workers=2)
        client = cluster.client(templates=templates)
        x = client.objects.define('x')
        client.define_objects()
        handles = []
        for params in (b'', b'second', b'third'):
            with client.block('set') as blk:
                blk.spawn('Const', writes=[x], params=params)
            handles.append(blk.handle)
        client.flush()
        return client.read_objects([x])[x], [h.mode for h in handles]

    value, modes = final_value(templates=True)
    assert modes[0] == 'record' and modes[2] in ('fast', 'hit')
    assert value == b'third'
    assert final_value(templates=False)[0] == b'third'
