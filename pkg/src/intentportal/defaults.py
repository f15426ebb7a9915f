"""Starter function collection for fresh users.

Twenty common text-taking functions, ordered most-popular-first; that
order doubles as the frequency prior before any usage exists.  Users
prune and extend the list through the collection API.
"""

from .memory import FunctionDescriptor

DEFAULT_FUNCTIONS: tuple[FunctionDescriptor, ...] = (
    FunctionDescriptor("browser-search", "browser", "search", description="web search"),
    FunctionDescriptor("maps-search", "maps", "search", description="find a place"),
    FunctionDescriptor("maps-navigate", "maps", "navigate", description="start navigation"),
    FunctionDescriptor("notes-record", "notes", "record", description="jot a note"),
    FunctionDescriptor("mail-compose", "mail", "compose", description="write an email"),
    FunctionDescriptor("calendar-create", "calendar", "create", description="schedule an event"),
    FunctionDescriptor("music-search", "music", "search", description="find a song"),
    FunctionDescriptor("video-search", "video", "search", description="find a video"),
    FunctionDescriptor("shopping-search", "shopping", "search", description="find a product"),
    FunctionDescriptor("translate-translate", "translate", "translate", description="translate text"),
    FunctionDescriptor("calculator-calculate", "calculator", "calculate", description="evaluate an expression"),
    FunctionDescriptor("appstore-search", "appstore", "search", description="find an app"),
    FunctionDescriptor("photos-search", "photos", "search", description="find a photo"),
    FunctionDescriptor("files-search", "files", "search", description="find a file"),
    FunctionDescriptor("weather-search", "weather", "search", description="check a forecast"),
    FunctionDescriptor("clock-alarm", "clock", "alarm", description="set an alarm"),
    FunctionDescriptor("contacts-search", "contacts", "search", description="look up a contact"),
    FunctionDescriptor("reminders-record", "reminders", "record", description="set a reminder"),
    FunctionDescriptor("settings-search", "settings", "search", description="find a setting"),
    FunctionDescriptor("social-search", "social", "search", description="find a post or account"),
)
