# models.py

from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import relationship

Base = declarative_base()


class Sample(Base):
    __tablename__ = "samples"
    id = Column(Integer, primary_key=True, autoincrement=True)
    split = Column(String(16), nullable=False)
    seed = Column(Integer)
    sample_hash = Column(String(64), nullable=False, unique=True)
    path = Column(String)
    created_at = Column(DateTime, default=datetime.utcnow)


class TrainingRun(Base):
    __tablename__ = "training_runs"
    id = Column(Integer, primary_key=True, autoincrement=True)
    seed = Column(Integer, nullable=False)
    config = Column(Text)  # key=value dump of the TrainConfig
    data_dir = Column(String)
    checkpoint_path = Column(String)
    started_at = Column(DateTime, default=datetime.utcnow)
    finished_at = Column(DateTime)
    final_step = Column(Integer, default=0)

    losses = relationship("LossRecord", back_populates="run", cascade="all, delete-orphan")
    metrics = relationship("MetricRecord", back_populates="run")


class LossRecord(Base):
    __tablename__ = "loss_records"
    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("training_runs.id"), nullable=False)
    step = Column(Integer, nullable=False)
    d_loss = Column(Float)
    g_adv = Column(Float)
    lovasz = Column(Float)
    gp = Column(Float)
    total_g = Column(Float)

    run = relationship("TrainingRun", back_populates="losses")


class MetricRecord(Base):
    __tablename__ = "metric_records"
    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("training_runs.id"), nullable=True)
    checkpoint_path = Column(String)
    split = Column(String(16))
    name = Column(String, nullable=False)
    value = Column(Float)
    created_at = Column(DateTime, default=datetime.utcnow)

    run = relationship("TrainingRun", back_populates="metrics")
