from app.database.connection import engine, Base, get_db, SessionLocal, ledger_session

# Note: ledger tables are created in app/main.py and by ledger_session
