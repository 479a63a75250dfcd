# database.py

from contextlib import contextmanager
from datetime import datetime

import numpy as np
from sqlalchemy import create_engine
from sqlalchemy.exc import IntegrityError
from sqlalchemy.inspection import inspect
from sqlalchemy.orm import Session, sessionmaker

from config import Config
from exceptions import SplitLeakError
from models import Base, LossRecord, MetricRecord, Sample, TrainingRun


def _connect(url):
    bound = create_engine(url, echo=False)
    return bound, sessionmaker(autocommit=False, autoflush=False, bind=bound)


engine, SessionLocal = _connect(Config.get_db_url())


def configure(url):
    """Point the registry at another database (e.g. a temporary file in tests)."""
    global engine, SessionLocal
    engine.dispose()
    engine, SessionLocal = _connect(url)
    return engine


def init_db():
    """Create the sample, run, loss and metric tables that do not exist yet."""
    Base.metadata.create_all(bind=engine)


@contextmanager
def get_db() -> Session:
    """
    Registry session committed when the block exits cleanly.

    Any error, a ``SplitLeakError`` included, rolls back every sample, loss and metric
    written inside the block.
    """
    session = SessionLocal()
    try:
        yield session
        session.commit()
    except BaseException:
        session.rollback()
        raise
    finally:
        session.close()


def filter_model_data(model, data):
    """Drop keys that are not columns of the model and unwrap numpy scalars."""
    columns = inspect(model).columns
    filtered_data = {}
    for k, v in data.items():
        if k in columns.keys():
            filtered_data[k] = v.item() if isinstance(v, np.generic) else v
    return filtered_data


def add_or_update(session: Session, model, key=("id",), **kwargs):
    """Add a new record or update the one matching the ``key`` columns."""
    filtered_kwargs = filter_model_data(model, kwargs)
    lookup = {k: filtered_kwargs[k] for k in key}
    instance = session.query(model).filter_by(**lookup).first()
    if instance:
        for k, value in filtered_kwargs.items():
            setattr(instance, k, value)
    else:
        instance = model(**filtered_kwargs)
        try:
            session.add(instance)
            session.flush()
        except IntegrityError:
            session.rollback()
            existing = session.query(model).filter_by(**lookup).first()
            if existing:
                for k, value in filtered_kwargs.items():
                    setattr(existing, k, value)
                instance = existing
            else:
                raise
    return instance


def register_sample(session: Session, sample_hash, split, seed=None, path=None):
    """
    Record a sample under its split.

    :raises SplitLeakError: when the hash is already registered under another split
    """
    existing = session.query(Sample).filter_by(sample_hash=sample_hash).first()
    if existing is not None and existing.split != split:
        raise SplitLeakError(sample_hash, existing.split, split)
    return add_or_update(
        session, Sample, key=("sample_hash",), sample_hash=sample_hash, split=split, seed=seed, path=path
    )


def split_of(session: Session, sample_hash):
    sample = session.query(Sample).filter_by(sample_hash=sample_hash).first()
    return sample.split if sample else None


def start_run(session: Session, seed, config_text, data_dir=None):
    run = TrainingRun(seed=seed, config=config_text, data_dir=data_dir, started_at=datetime.utcnow())
    session.add(run)
    session.flush()
    return run


def record_loss(session: Session, run_id, step, report):
    """Store one LossReport of a run."""
    values = report.as_dict()
    session.add(
        LossRecord(
            **filter_model_data(
                LossRecord,
                {
                    "run_id": run_id,
                    "step": step,
                    "d_loss": values["d_loss"],
                    "g_adv": values["g_adv_loss"],
                    "lovasz": values["lovasz_loss"],
                    "gp": values["gp_term"],
                    "total_g": values["total_g"],
                },
            )
        )
    )


def finish_run(session: Session, run_id, final_step, checkpoint_path=None):
    run = session.get(TrainingRun, run_id)
    run.final_step = final_step
    run.checkpoint_path = checkpoint_path
    run.finished_at = datetime.utcnow()
    return run


def record_metrics(session: Session, report, split=None, run_id=None, checkpoint_path=None):
    """Store every row of a MetricReport; NaN values are stored as NULL."""
    for name, value in report.rows():
        value = None if value is None or np.isnan(value) else float(value)
        session.add(
            MetricRecord(run_id=run_id, checkpoint_path=checkpoint_path, split=split, name=name, value=value)
        )


def clear_db():
    """
    Delete every registered sample, training run, loss record and metric.

    :return: Dict of table name to number of rows removed
    """
    init_db()
    removed = {}
    with get_db() as db:
        for model in (LossRecord, MetricRecord, TrainingRun, Sample):
            removed[model.__tablename__] = db.query(model).delete()
    return removed
