from app.commands import analyze, design, export_model, plot, simulate

COMMANDS = (simulate, design, analyze, plot, export_model)
