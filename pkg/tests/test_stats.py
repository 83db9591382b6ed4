from objstore.stats import COUNTERS, OPERATIONS, OpStat, StatsRecord, csv_columns, total


def test_opstat_min_max():
    s = OpStat()
    for t in (5, 2, 9):
        s.record(t)
    assert (s.count, s.total, s.min, s.max) == (3, 16, 2, 9)
    assert s.avg == 16 / 3
    assert OpStat().avg == 0.0


def test_difference_and_sum():
    a = StatsRecord("a")
    a.op("fetch").record(10)
    a.bump("messages_sent", 3)
    snap = a.snapshot()
    a.op("fetch").record(30)
    a.bump("messages_sent")
    d = a - snap
    assert d.ops["fetch"].count == 1 and d.ops["fetch"].total == 30
    assert d["messages_sent"] == 1
    assert (snap + d).row() == a.row() | {"fetch.min": 10, "fetch.max": 10}


def test_total_and_columns():
    recs = []
    for i in range(3):
        r = StatsRecord(str(i))
        r.op("wait").record(i + 1)
        r.bump("idle_ticks", 10)
        recs.append(r)
    t = total(recs)
    assert t.ops["wait"].count == 3 and t.ops["wait"].min == 1 and t.ops["wait"].max == 3
    assert t["idle_ticks"] == 30
    row = t.row()
    assert list(row) == csv_columns()
    assert len(csv_columns()) == 1 + 4 * len(OPERATIONS) + len(COUNTERS)
    assert "wait" in t.display()
